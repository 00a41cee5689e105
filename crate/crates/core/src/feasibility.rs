//! Properness of the alignment equation system.
//!
//! Every scalar alignment constraint `u_m^[i]^H H_ij v_n^[j] = 0` (`i != j`)
//! involves the free variables of one precoder column (`M_j - d_j` of them)
//! and one combiner column (`N_i - d'_i`). The system is *proper* when every
//! subset of equations involves at least as many variables as equations.
//! That is Hall's condition for a matching saturating all equations in the
//! bipartite equation/variable graph, which is what [`is_proper_general`]
//! checks. Properness is a counting heuristic for almost-sure feasibility;
//! the solver remains the ground truth.

use crate::channel::NetworkDims;
use crate::error::{Error, Result};

/// One scalar alignment constraint between combiner column `m` of receiver `rx`
/// and precoder column `n` of transmitter `tx` (all 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Equation {
    pub rx: usize,
    pub tx: usize,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKind {
    /// Column `column` of the precoder of `user`.
    Precoder { user: usize, column: usize },
    /// Column `column` of the interference-suppression basis of `user`.
    Combiner { user: usize, column: usize },
}

/// The free scalar variables of one precoder or combiner column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableGroup {
    pub kind: GroupKind,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationSystem {
    pub equations: Vec<Equation>,
    pub groups: Vec<VariableGroup>,
    /// `incidence[e] = [precoder group, combiner group]` of equation `e`.
    pub incidence: Vec<[usize; 2]>,
}

impl EquationSystem {
    pub fn n_equations(&self) -> usize {
        self.equations.len()
    }

    /// Total number of scalar variables.
    pub fn n_variables(&self) -> usize {
        self.groups.iter().map(|g| g.size).sum()
    }

    /// Number of variables involved in equation `e`.
    pub fn equation_support(&self, e: usize) -> usize {
        self.incidence[e].iter().map(|&g| self.groups[g].size).sum()
    }

    /// Number of distinct variables involved in a set of equations.
    pub fn support_of(&self, equations: &[usize]) -> usize {
        let mut seen = vec![false; self.groups.len()];
        let mut total = 0;
        for &e in equations {
            for &g in &self.incidence[e] {
                if !seen[g] {
                    seen[g] = true;
                    total += self.groups[g].size;
                }
            }
        }
        total
    }
}

/// Certificate that a system is improper.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// Symmetric closed form: total variables fall short of total equations.
    Count { variables: i64, equations: i64 },
    /// A set of equations (indices into [`EquationSystem::equations`]) involving
    /// fewer variables than its size.
    Equations { equations: Vec<usize>, variables: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProperReport {
    pub proper: bool,
    /// Symmetric path: `N_v - N_e`. General path: `N_v - N_e` when proper,
    /// otherwise minus the deficiency `|S| - |var(S)|` of the witness.
    pub margin: i64,
    pub witness: Option<Witness>,
    pub warnings: Vec<String>,
}

impl ProperReport {
    /// Properness implies almost-sure feasibility only heuristically.
    pub const NOTE: &'static str =
        "proper systems are expected, not proven, to admit an alignment solution almost surely";
}

fn stream_warnings(d: &[usize], dprime: &[usize]) -> Vec<String> {
    d.iter()
        .zip(dprime)
        .enumerate()
        .filter(|(_, (d, dp))| dp < d)
        .map(|(i, (d, dp))| {
            format!("user {i}: d' = {dp} < d = {d}, the effective channel cannot reach rank d")
        })
        .collect()
}

/// Closed-form properness of a symmetric system:
/// `d (N_T - d) + d' (N_R - d') - d d' (K - 1) >= 0`.
pub fn is_proper_symmetric(k: usize, nt: usize, nr: usize, d: usize, dprime: usize) -> Result<ProperReport> {
    if k == 0 || nt == 0 || nr == 0 || d == 0 || dprime == 0 {
        return Err(Error::Domain("all arguments must be positive".into()));
    }
    if d > nt {
        return Err(Error::Domain(format!("d = {d} exceeds N_T = {nt}")));
    }
    if dprime > nr {
        return Err(Error::Domain(format!("d' = {dprime} exceeds N_R = {nr}")));
    }
    let (k, nt, nr, d, dp) = (k as i64, nt as i64, nr as i64, d as i64, dprime as i64);
    let per_user_vars = d * (nt - d) + dp * (nr - dp);
    let margin = per_user_vars - d * dp * (k - 1);
    let proper = margin >= 0;
    let warnings = stream_warnings(&[d as usize], &[dp as usize]);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ProperReport {
        proper,
        margin,
        witness: (!proper).then_some(Witness::Count {
            variables: k * per_user_vars,
            equations: k * (k - 1) * d * dp,
        }),
        warnings,
    })
}

/// Enumerates the scalar alignment equations and variable groups.
pub fn build_equation_system(dims: &NetworkDims) -> Result<EquationSystem> {
    dims.validate()?;
    let k = dims.k;
    let mut groups = Vec::new();
    let mut precoder_base = vec![0; k];
    for j in 0..k {
        precoder_base[j] = groups.len();
        for column in 0..dims.d[j] {
            groups.push(VariableGroup {
                kind: GroupKind::Precoder { user: j, column },
                size: dims.m[j] - dims.d[j],
            });
        }
    }
    let mut combiner_base = vec![0; k];
    for i in 0..k {
        combiner_base[i] = groups.len();
        for column in 0..dims.dprime[i] {
            groups.push(VariableGroup {
                kind: GroupKind::Combiner { user: i, column },
                size: dims.n[i] - dims.dprime[i],
            });
        }
    }
    let mut equations = Vec::new();
    let mut incidence = Vec::new();
    for i in 0..k {
        for j in (0..k).filter(|&j| j != i) {
            for m in 0..dims.dprime[i] {
                for n in 0..dims.d[j] {
                    equations.push(Equation { rx: i, tx: j, m, n });
                    incidence.push([precoder_base[j] + n, combiner_base[i] + m]);
                }
            }
        }
    }
    Ok(EquationSystem {
        equations,
        groups,
        incidence,
    })
}

/// Maximum matching of equations into scalar variables, where a group of size
/// `s` can absorb up to `s` equations.
struct Matching<'a> {
    sys: &'a EquationSystem,
    /// Group matched to each equation.
    assigned: Vec<Option<usize>>,
    /// Equations currently matched into each group.
    members: Vec<Vec<usize>>,
}

impl<'a> Matching<'a> {
    fn new(sys: &'a EquationSystem) -> Self {
        Matching {
            sys,
            assigned: vec![None; sys.n_equations()],
            members: vec![Vec::new(); sys.groups.len()],
        }
    }

    /// Augmenting-path search from equation `e`; `dead` marks groups already
    /// explored without success since the matching last changed.
    fn augment(&mut self, e: usize, dead: &mut [bool]) -> bool {
        for &g in &self.sys.incidence[e] {
            if dead[g] || Some(g) == self.assigned[e] {
                continue;
            }
            dead[g] = true;
            if self.members[g].len() < self.sys.groups[g].size {
                self.attach(e, g);
                return true;
            }
            for idx in 0..self.members[g].len() {
                let other = self.members[g][idx];
                if self.augment(other, dead) {
                    self.attach(e, g);
                    return true;
                }
            }
        }
        false
    }

    fn attach(&mut self, e: usize, g: usize) {
        if let Some(old) = self.assigned[e].take() {
            self.members[old].retain(|&x| x != e);
        }
        self.assigned[e] = Some(g);
        self.members[g].push(e);
    }

    /// Equations reachable by alternating paths from the unmatched ones.
    fn deficient_set(&self) -> Vec<usize> {
        let mut in_set = vec![false; self.sys.n_equations()];
        let mut seen_group = vec![false; self.sys.groups.len()];
        let mut stack: Vec<usize> = (0..self.sys.n_equations())
            .filter(|&e| self.assigned[e].is_none())
            .collect();
        for &e in &stack {
            in_set[e] = true;
        }
        while let Some(e) = stack.pop() {
            for &g in &self.sys.incidence[e] {
                if seen_group[g] {
                    continue;
                }
                seen_group[g] = true;
                for &other in &self.members[g] {
                    if !in_set[other] {
                        in_set[other] = true;
                        stack.push(other);
                    }
                }
            }
        }
        (0..self.sys.n_equations()).filter(|&e| in_set[e]).collect()
    }
}

/// Properness by Hall's condition, checked in polynomial time with a maximum matching.
pub fn is_proper_general(sys: &EquationSystem) -> ProperReport {
    let n_e = sys.n_equations() as i64;
    let n_v = sys.n_variables() as i64;
    if n_e > n_v {
        // the full set already violates the condition
        return ProperReport {
            proper: false,
            margin: n_v - n_e,
            witness: Some(Witness::Equations {
                equations: (0..sys.n_equations()).collect(),
                variables: n_v as usize,
            }),
            warnings: Vec::new(),
        };
    }
    let mut matching = Matching::new(sys);
    let mut dead = vec![false; sys.groups.len()];
    for e in 0..sys.n_equations() {
        if matching.augment(e, &mut dead) {
            dead.iter_mut().for_each(|x| *x = false);
        }
    }
    if matching.assigned.iter().all(Option::is_some) {
        return ProperReport {
            proper: true,
            margin: n_v - n_e,
            witness: None,
            warnings: Vec::new(),
        };
    }
    let set = matching.deficient_set();
    let variables = sys.support_of(&set);
    ProperReport {
        proper: false,
        margin: variables as i64 - set.len() as i64,
        witness: Some(Witness::Equations {
            equations: set,
            variables,
        }),
        warnings: Vec::new(),
    }
}

/// Properness of an arbitrary configuration via [`is_proper_general`], with
/// warnings for users whose receive subspace is smaller than their stream count.
pub fn check_dims(dims: &NetworkDims) -> Result<ProperReport> {
    let sys = build_equation_system(dims)?;
    let mut report = is_proper_general(&sys);
    report.warnings = stream_warnings(&dims.d, &dims.dprime);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

/// A proper operating point on the diversity-multiplexing trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmtPoint {
    pub d: usize,
    pub dprime: usize,
    pub margin: i64,
}

impl DmtPoint {
    /// Receive diversity order `d' - d + 1`.
    pub fn diversity(&self) -> usize {
        self.dprime + 1 - self.d
    }
}

/// All proper `(d, d')` with `1 <= d <= N_T`, `d <= d' <= N_R` for a symmetric
/// system, sorted by `d` then `d'`, both descending.
pub fn enumerate_dmt_points(k: usize, nt: usize, nr: usize) -> Vec<DmtPoint> {
    let mut points = Vec::new();
    for d in (1..=nt).rev() {
        for dprime in (d..=nr).rev() {
            if let Ok(r) = is_proper_symmetric(k, nt, nr, d, dprime) {
                if r.proper {
                    points.push(DmtPoint {
                        d,
                        dprime,
                        margin: r.margin,
                    });
                }
            }
        }
    }
    points
}
