//! Problem representation: general-form problems as read from disk, their
//! standard-form `min c'x s.t. Ax = b, x >= 0` counterparts, and the presolve
//! that brings the constraint matrix to full row rank.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Min,
    Max,
}

impl Sense {
    /// Factor applied to objective coefficients when converting to minimization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        }
    }
}

/// `min/max c'x s.t. A_eq x = b_eq, A_ub x <= b_ub, x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralProblem {
    pub sense: Sense,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    /// Per-variable integrality; only the discrete oracles look at it.
    pub integrality: Vec<bool>,
}

impl GeneralProblem {
    pub fn new(
        sense: Sense,
        c: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_ub: DMatrix<f64>,
        b_ub: DVector<f64>,
    ) -> Result<Self> {
        let n = c.len();
        let p = Self {
            sense,
            c,
            a_eq,
            b_eq,
            a_ub,
            b_ub,
            integrality: vec![false; n],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_integrality(mut self, flags: Vec<bool>) -> Result<Self> {
        self.integrality = flags;
        self.validate()?;
        Ok(self)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if n == 0 {
            return Err(Error::Structural("problem has no variables".into()));
        }
        for (name, a, b) in [
            ("A_eq", &self.a_eq, &self.b_eq),
            ("A_ub", &self.a_ub, &self.b_ub),
        ] {
            if a.nrows() > 0 && a.ncols() != n {
                return Err(Error::Structural(format!(
                    "{name} has {} columns but the problem has {n} variables",
                    a.ncols()
                )));
            }
            if a.nrows() != b.len() {
                return Err(Error::Structural(format!(
                    "{name} has {} rows but its right-hand side has {} entries",
                    a.nrows(),
                    b.len()
                )));
            }
        }
        if self.integrality.len() != n {
            return Err(Error::Structural(format!(
                "integrality has {} flags for {n} variables",
                self.integrality.len()
            )));
        }
        if self
            .c
            .iter()
            .chain(self.b_eq.iter())
            .chain(self.b_ub.iter())
            .any(|v| !v.is_finite())
            || self
                .a_eq
                .iter()
                .chain(self.a_ub.iter())
                .any(|v| !v.is_finite())
        {
            return Err(Error::Structural(
                "problem data contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Objective value of `x` in the problem's own sense.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProblemFile::from(self))?)
    }
}

/// On-disk interchange format. Field names are fixed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default)]
    pub sense: Sense,
    pub c: Vec<f64>,
    #[serde(rename = "A_eq", default)]
    pub a_eq: Vec<Vec<f64>>,
    #[serde(default)]
    pub b_eq: Vec<f64>,
    #[serde(rename = "A_ub", default)]
    pub a_ub: Vec<Vec<f64>>,
    #[serde(default)]
    pub b_ub: Vec<f64>,
    #[serde(default)]
    pub integrality: Vec<bool>,
}

impl TryFrom<ProblemFile> for GeneralProblem {
    type Error = Error;

    fn try_from(f: ProblemFile) -> Result<Self> {
        let n = f.c.len();
        let integrality = if f.integrality.is_empty() {
            vec![false; n]
        } else {
            f.integrality
        };
        let p = GeneralProblem {
            sense: f.sense,
            c: DVector::from_vec(f.c),
            a_eq: from_rows(&f.a_eq, n)?,
            b_eq: DVector::from_vec(f.b_eq),
            a_ub: from_rows(&f.a_ub, n)?,
            b_ub: DVector::from_vec(f.b_ub),
            integrality,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<&GeneralProblem> for ProblemFile {
    fn from(p: &GeneralProblem) -> Self {
        ProblemFile {
            sense: p.sense,
            c: p.c.iter().copied().collect(),
            a_eq: to_rows(&p.a_eq),
            b_eq: p.b_eq.iter().copied().collect(),
            a_ub: to_rows(&p.a_ub),
            b_ub: p.b_ub.iter().copied().collect(),
            integrality: p.integrality.clone(),
        }
    }
}

/// `min c'x s.t. Ax = b, x >= 0` with the bookkeeping needed to map back.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardFormLP {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Number of leading columns that are original variables.
    pub num_original: usize,
    /// Columns holding slack variables.
    pub slacks: Range<usize>,
    /// `+1` for minimization, `-1` when the original problem maximized.
    pub sense_sign: f64,
}

impl StandardFormLP {
    /// Build directly from `(c, A, b)` with no slack columns.
    pub fn new(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let k = c.len();
        if a.ncols() != k || a.nrows() != b.len() {
            return Err(Error::Structural(format!(
                "A is {}x{}, c has {} and b has {} entries",
                a.nrows(),
                a.ncols(),
                k,
                b.len()
            )));
        }
        Ok(Self {
            c,
            a,
            b,
            num_original: k,
            slacks: k..k,
            sense_sign: 1.0,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    /// Same structure with a different cost vector.
    pub fn with_cost(&self, c: DVector<f64>) -> Self {
        assert_eq!(c.len(), self.c.len(), "cost vector length");
        Self { c, ..self.clone() }
    }

    pub fn with_rhs(&self, b: DVector<f64>) -> Self {
        assert_eq!(b.len(), self.b.len(), "rhs length");
        Self { b, ..self.clone() }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x)
    }

    /// Original variables of a standard-form point.
    pub fn original_x(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.num_original).into_owned()
    }

    /// Objective of the original problem (original sense) at a standard-form point.
    pub fn original_objective(&self, x: &DVector<f64>) -> f64 {
        self.sense_sign * self.c.dot(x)
    }
}

/// Convert to standard form: `Cx <= d` rows become `Cx + s = d` with one fresh
/// slack column each; equality rows come first. Maximization negates `c`.
pub fn to_standard_form(p: &GeneralProblem) -> Result<StandardFormLP> {
    p.validate()?;
    let n = p.num_vars();
    let m_eq = p.a_eq.nrows();
    let m_ub = p.a_ub.nrows();
    let k = n + m_ub;
    let rows = m_eq + m_ub;

    let sign = p.sense.sign();
    let mut c = DVector::zeros(k);
    c.rows_mut(0, n).copy_from(&(&p.c * sign));

    let mut a = DMatrix::zeros(rows, k);
    let mut b = DVector::zeros(rows);
    if m_eq > 0 {
        a.view_mut((0, 0), (m_eq, n)).copy_from(&p.a_eq);
        b.rows_mut(0, m_eq).copy_from(&p.b_eq);
    }
    for i in 0..m_ub {
        a.view_mut((m_eq + i, 0), (1, n)).copy_from(&p.a_ub.row(i));
        a[(m_eq + i, n + i)] = 1.0;
        b[m_eq + i] = p.b_ub[i];
    }
    Ok(StandardFormLP {
        c,
        a,
        b,
        num_original: n,
        slacks: n..k,
        sense_sign: sign,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PresolveReport {
    /// Indices (into the input rows) of rows that were dropped.
    pub removed_rows: Vec<usize>,
    /// Indices of the rows that survive, in output order.
    pub kept_rows: Vec<usize>,
    /// True when at least one row was a linear combination of earlier rows.
    pub rank_deficiency_detected: bool,
    /// Positive factor each kept row (and its rhs entry) was multiplied by.
    pub row_scales: Vec<f64>,
}

impl PresolveReport {
    /// Apply the row selection and scaling to another right-hand side built for
    /// the same constraint matrix. Consistency of the dropped rows is not rechecked.
    pub fn apply_to_rhs(&self, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.kept_rows.len(),
            self.kept_rows
                .iter()
                .zip(&self.row_scales)
                .map(|(&i, s)| b[i] * s),
        )
    }
}

const DEPENDENCE_TOL: f64 = 1e-9;

/// Remove zero and linearly dependent rows, then scale every row to unit
/// infinity norm. Fails if the remaining rows are still rank deficient or if a
/// dropped row contradicts the others.
pub fn presolve(lp: &StandardFormLP) -> Result<(StandardFormLP, PresolveReport)> {
    let k = lp.num_vars();
    let mut report = PresolveReport::default();

    // Gram-Schmidt over rows; each basis vector also remembers which
    // combination of kept rows produced it so the implied rhs can be checked.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut combos: Vec<Vec<f64>> = Vec::new();

    for i in 0..lp.num_rows() {
        let row: DVector<f64> = lp.a.row(i).transpose();
        let norm = row.norm();
        let bi = lp.b[i];
        if norm == 0.0 {
            if bi.abs() > DEPENDENCE_TOL {
                return Err(Error::Infeasible(format!("row {i} reads 0 = {bi}")));
            }
            report.removed_rows.push(i);
            continue;
        }
        let mut resid = row.clone();
        let mut coords = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (j, q) in basis.iter().enumerate() {
                let proj = q.dot(&resid);
                coords[j] += proj;
                resid.axpy(-proj, q, 1.0);
            }
        }
        let rn = resid.norm();
        if rn <= DEPENDENCE_TOL * norm {
            // row = sum_j coords[j] q_j = sum_l w_l a_{kept_l}
            let mut implied = 0.0;
            let mut magnitude = 0.0;
            for (j, cj) in coords.iter().enumerate() {
                for (l, w) in combos[j].iter().enumerate() {
                    let term = cj * w * lp.b[report.kept_rows[l]];
                    implied += term;
                    magnitude += term.abs();
                }
            }
            if (implied - bi).abs() > 1e-7 * (1.0 + bi.abs() + magnitude) {
                return Err(Error::Infeasible(format!(
                    "row {i} is a combination of earlier rows with rhs {implied} but reads {bi}"
                )));
            }
            report.removed_rows.push(i);
            report.rank_deficiency_detected = true;
            continue;
        }
        let new_idx = report.kept_rows.len();
        let mut combo = vec![0.0; new_idx + 1];
        combo[new_idx] = 1.0;
        for (j, cj) in coords.iter().enumerate() {
            for (l, w) in combos[j].iter().enumerate() {
                combo[l] -= cj * w;
            }
        }
        combo.iter_mut().for_each(|v| *v /= rn);
        for c in combos.iter_mut() {
            c.push(0.0);
        }
        basis.push(resid / rn);
        combos.push(combo);
        report.kept_rows.push(i);
    }

    if report.kept_rows.is_empty() {
        return Err(Error::Structural(
            "no constraints remain after presolve".into(),
        ));
    }

    let p = report.kept_rows.len();
    let mut a = DMatrix::zeros(p, k);
    let mut b = DVector::zeros(p);
    for (r, &i) in report.kept_rows.iter().enumerate() {
        let row = lp.a.row(i);
        let scale = 1.0 / row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        a.row_mut(r).copy_from(&(row * scale));
        b[r] = lp.b[i] * scale;
        report.row_scales.push(scale);
    }
    if !check_full_row_rank(&a) {
        return Err(Error::RankDeficient);
    }
    Ok((StandardFormLP { a, b, ..lp.clone() }, report))
}

/// `rank(A) == rows(A)` with singular values below `1e-10 ||A||_2` treated as zero.
pub fn check_full_row_rank(a: &DMatrix<f64>) -> bool {
    let (p, k) = a.shape();
    if p == 0 {
        return true;
    }
    if p > k {
        return false;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |m, v| m.max(*v));
    if smax == 0.0 {
        return false;
    }
    sv.iter().filter(|s| **s > 1e-10 * smax).count() == p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    }

    #[test]
    fn inequality_gets_slack() {
        let (ae, be) = empty(1);
        let p = GeneralProblem::new(
            Sense::Min,
            DVector::from_vec(vec![1.0]),
            ae,
            be,
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![3.0]),
        )
        .unwrap();
        let s = to_standard_form(&p).unwrap();
        assert_eq!(s.c.as_slice(), &[1.0, 0.0]);
        assert_eq!(s.a, DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        assert_eq!(s.b.as_slice(), &[3.0]);
        assert_eq!(s.slacks, 1..2);
    }

    #[test]
    fn equality_passes_through() {
        let (au, bu) = empty(1);
        let p = GeneralProblem::new(
            Sense::Min,
            DVector::from_vec(vec![1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![2.0]),
            au,
            bu,
        )
        .unwrap();
        let s = to_standard_form(&p).unwrap();
        assert_eq!(s.num_vars(), 1);
        assert!(s.slacks.is_empty());
        assert_eq!(s.b.as_slice(), &[2.0]);
    }

    #[test]
    fn maximization_negates_costs() {
        let (ae, be) = empty(2);
        let p = GeneralProblem::new(
            Sense::Max,
            DVector::from_vec(vec![10.0, 6.0]),
            ae,
            be,
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let s = to_standard_form(&p).unwrap();
        assert_eq!(s.c.as_slice(), &[-10.0, -6.0, 0.0]);
        assert_eq!(s.a, DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]));
        assert_eq!(s.b.as_slice(), &[1.0]);
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(s.original_objective(&x), 10.0);
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let (ae, be) = empty(2);
        let err = GeneralProblem::new(
            Sense::Min,
            DVector::from_vec(vec![1.0, 2.0]),
            ae,
            be,
            DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn json_field_names_are_fixed() {
        let text = r#"{"sense":"max","c":[1,2],"A_eq":[],"b_eq":[],"A_ub":[[1,1]],"b_ub":[4],"integrality":[true,false]}"#;
        let p = GeneralProblem::from_json(text).unwrap();
        assert_eq!(p.sense, Sense::Max);
        assert_eq!(p.a_ub.nrows(), 1);
        assert_eq!(p.integrality, vec![true, false]);
        let back: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        for key in ["sense", "c", "A_eq", "b_eq", "A_ub", "b_ub", "integrality"] {
            assert!(back.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn duplicate_row_removed() {
        let lp = StandardFormLP::new(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        )
        .unwrap();
        let (out, rep) = presolve(&lp).unwrap();
        assert_eq!(out.num_rows(), 1);
        assert_eq!(rep.removed_rows, vec![1]);
        assert!(rep.rank_deficiency_detected);
    }

    #[test]
    fn inconsistent_duplicate_is_infeasible() {
        let lp = StandardFormLP::new(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        )
        .unwrap();
        assert!(matches!(presolve(&lp), Err(Error::Infeasible(_))));
    }

    #[test]
    fn zero_row_dropped_or_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 2.0]);
        let ok = StandardFormLP::new(
            DVector::zeros(2),
            a.clone(),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        let (out, rep) = presolve(&ok).unwrap();
        assert_eq!(out.num_rows(), 1);
        assert_eq!(rep.removed_rows, vec![0]);
        let bad =
            StandardFormLP::new(DVector::zeros(2), a, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(presolve(&bad).is_err());
    }

    #[test]
    fn rows_scaled_to_unit_inf_norm() {
        let lp = StandardFormLP::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(2, 3, &[4.0, -8.0, 2.0, 0.5, 0.25, 0.0]),
            DVector::from_vec(vec![8.0, 1.0]),
        )
        .unwrap();
        let (out, rep) = presolve(&lp).unwrap();
        assert_eq!(rep.row_scales, vec![0.125, 2.0]);
        assert_eq!(
            out.a.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, -1.0, 0.25]
        );
        assert_eq!(out.b.as_slice(), &[1.0, 2.0]);
        assert_eq!(
            rep.apply_to_rhs(&DVector::from_vec(vec![16.0, 3.0]))
                .as_slice(),
            &[2.0, 6.0]
        );
    }

    #[test]
    fn rank_checks() {
        assert!(check_full_row_rank(&DMatrix::identity(3, 3)));
        assert!(!check_full_row_rank(&DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 0.0, 0.0]
        )));
        assert!(!check_full_row_rank(&DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 2.0, 4.0]
        )));
        assert!(!check_full_row_rank(&DMatrix::zeros(2, 3)));
    }
}
