//! Time-varying matrices with parsed closed-form entries, plus the JSON
//! system-description format that is the single ingestion point of the
//! toolkit.

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A matrix whose entries are scalar expressions of time.
///
/// Values are immutable after construction; evaluation of one entry never
/// depends on another, so matrices can be shared across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TvMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<ScalarExpr>,
}

impl TvMatrix {
    /// Build from a row-major entry list. `entries.len()` must equal
    /// `rows * cols`.
    pub fn new(rows: usize, cols: usize, entries: Vec<ScalarExpr>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dimension("matrix dimensions must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(Error::dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Ok(TvMatrix {
            rows,
            cols,
            entries,
        })
    }

    /// Parse from rows of expression strings.
    pub fn parse_rows(rows: &[Vec<String>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::dimension("matrix needs at least one row"));
        }
        let cols = rows[0].len();
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for src in row {
                entries.push(ScalarExpr::parse(src)?);
            }
        }
        TvMatrix::new(rows.len(), cols, entries)
    }

    /// Constant matrix from numeric values.
    pub fn from_constant(m: &DMatrix<f64>) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| ScalarExpr::constant(m[(i, j)]))
            .collect();
        TvMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        TvMatrix::from_constant(&DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        TvMatrix::from_constant(&DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entry(&self, row: usize, col: usize) -> &ScalarExpr {
        &self.entries[row * self.cols + col]
    }

    /// Row-major expression strings (round-trippable through the parser).
    pub fn to_strings(&self) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.entry(i, j).to_string()).collect())
            .collect()
    }

    /// Evaluate every entry at time `t`.
    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.entry(i, j).eval(t).map_err(|e| match e {
                    Error::Eval { t, cause } => Error::EvalEntry {
                        row: i,
                        col: j,
                        t,
                        cause,
                    },
                    other => other,
                })?;
            }
        }
        Ok(out)
    }

    /// Structural transpose (entry expressions are shared unchanged).
    pub fn transpose(&self) -> TvMatrix {
        let entries = (0..self.cols)
            .flat_map(|i| (0..self.rows).map(move |j| (i, j)))
            .map(|(i, j)| self.entry(j, i).clone())
            .collect();
        TvMatrix {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    /// Entrywise negation at the AST level; double negations collapse.
    pub fn negated(&self) -> TvMatrix {
        TvMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(ScalarExpr::negated).collect(),
        }
    }

    /// AST-level matrix product: entry (i,j) is the sum of products.
    pub fn matmul(&self, other: &TvMatrix) -> Result<TvMatrix> {
        if self.cols != other.rows {
            return Err(Error::dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = self.entry(i, 0).mul(other.entry(0, j));
                for k in 1..self.cols {
                    acc = acc.add(&self.entry(i, k).mul(other.entry(k, j)));
                }
                entries.push(acc);
            }
        }
        TvMatrix::new(self.rows, other.cols, entries)
    }

    /// AST-level entrywise difference.
    pub fn matsub(&self, other: &TvMatrix) -> Result<TvMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dimension(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.sub(b))
            .collect();
        TvMatrix::new(self.rows, self.cols, entries)
    }

    /// Numeric value when no entry references `t`.
    pub fn constant_value(&self) -> Option<DMatrix<f64>> {
        if self.entries.iter().all(ScalarExpr::is_constant) {
            self.eval(0.0).ok()
        } else {
            None
        }
    }
}

/// Uniform time grid with at least two strictly increasing points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) {
            return Err(Error::config("grid endpoints must be finite"));
        }
        if t_start >= t_end {
            return Err(Error::config(format!(
                "grid start {t_start} must be below end {t_end}"
            )));
        }
        if n_points < 2 {
            return Err(Error::config("grid needs at least 2 points"));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            n_points,
        })
    }

    /// Parse the CLI form `start:end:count`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(format!(
                "grid `{spec}` must have the form start:end:count"
            )));
        }
        let t_start: f64 = parts[0]
            .parse()
            .map_err(|_| Error::config(format!("bad grid start `{}`", parts[0])))?;
        let t_end: f64 = parts[1]
            .parse()
            .map_err(|_| Error::config(format!("bad grid end `{}`", parts[1])))?;
        let n: usize = parts[2]
            .parse()
            .map_err(|_| Error::config(format!("bad grid count `{}`", parts[2])))?;
        TimeGrid::new(t_start, t_end, n)
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.t_end - self.t_start) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| {
                if i + 1 == self.n_points {
                    self.t_end
                } else {
                    self.t_start + h * i as f64
                }
            })
            .collect()
    }
}

impl std::fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.t_start, self.t_end, self.n_points)
    }
}

/// On-disk system description.
///
/// ```json
/// { "n": 2, "p": 1, "m": 1,
///   "A": [["0","1"],["0","0"]],
///   "B": [["0"],["1"]],
///   "C": [["1","0"]] }
/// ```
///
/// `B` and `C` are optional; `p`/`m` may be omitted when the corresponding
/// matrix is absent.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub a: TvMatrix,
    pub b: Option<TvMatrix>,
    pub c: Option<TvMatrix>,
}

#[derive(Serialize, Deserialize)]
struct SystemConfigWire {
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(rename = "A")]
    a: Vec<Vec<String>>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    b: Option<Vec<Vec<String>>>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    c: Option<Vec<Vec<String>>>,
}

impl SystemConfig {
    pub fn new(a: TvMatrix, b: Option<TvMatrix>, c: Option<TvMatrix>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dimension(format!(
                "A must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        if let Some(b) = &b {
            if b.rows() != n {
                return Err(Error::dimension(format!(
                    "B must have {n} rows, got {}",
                    b.rows()
                )));
            }
        }
        if let Some(c) = &c {
            if c.cols() != n {
                return Err(Error::dimension(format!(
                    "C must have {n} columns, got {}",
                    c.cols()
                )));
            }
        }
        let p = b.as_ref().map_or(0, TvMatrix::cols);
        let m = c.as_ref().map_or(0, TvMatrix::rows);
        Ok(SystemConfig { n, p, m, a, b, c })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let wire: SystemConfigWire = serde_json::from_str(json)?;
        let a = TvMatrix::parse_rows(&wire.a)?;
        if a.rows() != wire.n || a.cols() != wire.n {
            return Err(Error::dimension(format!(
                "A must be {0}x{0} per the declared n, got {1}x{2}",
                wire.n,
                a.rows(),
                a.cols()
            )));
        }
        let b = wire.b.as_deref().map(TvMatrix::parse_rows).transpose()?;
        let c = wire.c.as_deref().map(TvMatrix::parse_rows).transpose()?;
        let cfg = SystemConfig::new(a, b, c)?;
        if let Some(p) = wire.p {
            if cfg.b.is_some() && p != cfg.p {
                return Err(Error::dimension(format!(
                    "declared p = {p} but B has {} columns",
                    cfg.p
                )));
            }
        }
        if let Some(m) = wire.m {
            if cfg.c.is_some() && m != cfg.m {
                return Err(Error::dimension(format!(
                    "declared m = {m} but C has {} rows",
                    cfg.m
                )));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SystemConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let wire = SystemConfigWire {
            n: self.n,
            p: self.b.as_ref().map(|_| self.p),
            m: self.c.as_ref().map(|_| self.m),
            a: self.a.to_strings(),
            b: self.b.as_ref().map(TvMatrix::to_strings),
            c: self.c.as_ref().map(TvMatrix::to_strings),
        };
        serde_json::to_string_pretty(&wire).expect("system config serializes")
    }

    pub fn require_b(&self) -> Result<&TvMatrix> {
        self.b
            .as_ref()
            .ok_or_else(|| Error::config("system file does not define B"))
    }

    pub fn require_c(&self) -> Result<&TvMatrix> {
        self.c
            .as_ref()
            .ok_or_else(|| Error::config("system file does not define C"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn mat(rows: &[&[&str]]) -> TvMatrix {
        let rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        TvMatrix::parse_rows(&rows).unwrap()
    }

    #[test]
    fn identity_evaluates_at_any_time() {
        let m = mat(&[&["1", "0"], &["0", "1"]]);
        let v = m.eval(7.0).unwrap();
        assert_eq!(v, DMatrix::identity(2, 2));
    }

    #[test]
    fn entries_evaluate_independently() {
        let m = mat(&[&["exp(-t)", "t^2/2"]]);
        let v = m.eval(0.0).unwrap();
        assert_eq!(v[(0, 0)], 1.0);
        let v = m.eval(3.0).unwrap();
        assert_eq!(v[(0, 1)], 4.5);
        // Matrix evaluation commutes with entry evaluation.
        for &t in &[0.0, 0.5, 3.0, 11.25] {
            let whole = m.eval(t).unwrap();
            for j in 0..2 {
                assert_eq!(whole[(0, j)], m.entry(0, j).eval(t).unwrap());
            }
        }
    }

    #[test]
    fn entry_errors_carry_position() {
        let m = mat(&[&["1", "ln(t)"]]);
        match m.eval(0.0) {
            Err(Error::EvalEntry { row, col, .. }) => {
                assert_eq!((row, col), (0, 1));
            }
            other => panic!("expected entry error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_entry_count_is_rejected() {
        let entries = vec![parse_expr("1").unwrap(); 3];
        assert!(TvMatrix::new(2, 2, entries).is_err());
    }

    #[test]
    fn ast_algebra_matches_numeric_algebra() {
        let a = mat(&[&["t", "1"], &["0", "exp(-t)"]]);
        let k = mat(&[&["sin(t)"], &["2"]]);
        let c = mat(&[&["1", "t"]]);
        let prod = k.matmul(&c).unwrap();
        let closed = a.matsub(&prod).unwrap();
        for i in 0..20 {
            let t = -2.0 + 0.37 * i as f64;
            let want = a.eval(t).unwrap() - k.eval(t).unwrap() * c.eval(t).unwrap();
            let got = closed.eval(t).unwrap();
            assert!((want - &got).amax() < 1e-12, "mismatch at t = {t}");
        }
    }

    #[test]
    fn double_negation_collapses() {
        let a = mat(&[&["t", "-1"]]);
        let back = a.negated().negated();
        assert_eq!(a, back);
    }

    #[test]
    fn time_grid_points_are_uniform_and_increasing() {
        let g = TimeGrid::new(0.0, 20.0, 21).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 21);
        assert_eq!(pts[0], 0.0);
        assert_eq!(pts[20], 20.0);
        for w in pts.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - 1.0).abs() < 1e-12);
        }
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert_eq!(TimeGrid::parse("0:20:21").unwrap(), g);
        assert!(TimeGrid::parse("0:20").is_err());
    }

    #[test]
    fn system_config_round_trips() {
        let json = r#"{ "n": 2, "p": 1, "m": 1,
            "A": [["0","1"],["0","0"]],
            "B": [["0"],["1"]],
            "C": [["1","0"]] }"#;
        let cfg = SystemConfig::from_json(json).unwrap();
        assert_eq!((cfg.n, cfg.p, cfg.m), (2, 1, 1));
        let again = SystemConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again.a, cfg.a);
        assert_eq!(again.b, cfg.b);
        assert_eq!(again.c, cfg.c);
    }

    #[test]
    fn system_config_validates_dimensions() {
        // B with the wrong number of rows.
        let bad = r#"{ "n": 2, "A": [["0","1"],["0","0"]], "B": [["1"]] }"#;
        assert!(SystemConfig::from_json(bad).is_err());
        // Declared p inconsistent with B.
        let bad = r#"{ "n": 1, "p": 2, "A": [["0"]], "B": [["1"]] }"#;
        assert!(SystemConfig::from_json(bad).is_err());
        // A not matching declared n.
        let bad = r#"{ "n": 2, "A": [["0"]] }"#;
        assert!(SystemConfig::from_json(bad).is_err());
    }
}
