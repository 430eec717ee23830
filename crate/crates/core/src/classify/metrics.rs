use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::DMatrix;

use super::predict::{calibrated_score, distance_table};
use crate::embed::PrototypeSet;
use crate::error::{Result, ZslError};

/// Default number of points in the automatic gamma grid.
pub const DEFAULT_GRID_POINTS: usize = 201;

/// Per-class top-1 accuracy and its unweighted mean over `classes`.
pub fn per_class_accuracy(
    preds: &[usize],
    labels: &[usize],
    classes: &BTreeSet<usize>,
) -> Result<(BTreeMap<usize, f64>, f64)> {
    if preds.len() != labels.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &l) in preds.iter().zip(labels) {
        if let Some(e) = counts.get_mut(&l) {
            e.1 += 1;
            if p == l {
                e.0 += 1;
            }
        }
    }
    let mut acc = BTreeMap::new();
    for (c, (hit, total)) in counts {
        if total == 0 {
            return Err(ZslError::EmptyClass(c));
        }
        acc.insert(c, hit as f64 / total as f64);
    }
    let mean = if acc.is_empty() {
        0.0
    } else {
        acc.values().sum::<f64>() / acc.len() as f64
    };
    Ok((acc, mean))
}

/// `2 a_u a_s / (a_u + a_s)`, zero when both are zero.
pub fn harmonic_mean(a_u: f64, a_s: f64) -> f64 {
    let denom = a_u + a_s;
    if denom > 0.0 {
        2.0 * a_u * a_s / denom
    } else {
        0.0
    }
}

/// How the calibration penalties are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaGrid {
    /// Evenly spaced over `[-d_max, d_max]`, `d_max` the largest squared
    /// sample-to-prototype distance of the setup being swept.
    Auto { points: usize },
    Linear { lo: f64, hi: f64, points: usize },
    Values(Vec<f64>),
}

impl Default for GammaGrid {
    fn default() -> Self {
        GammaGrid::Auto {
            points: DEFAULT_GRID_POINTS,
        }
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        n => (0..n)
            .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

impl GammaGrid {
    /// Concrete ascending, de-duplicated grid.
    pub fn resolve(&self, d_max: f64) -> Result<Vec<f64>> {
        let mut g = match self {
            GammaGrid::Auto { points } => linspace(-d_max, d_max, *points),
            GammaGrid::Linear { lo, hi, points } => linspace(*lo, *hi, *points),
            GammaGrid::Values(v) => v.clone(),
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ZslError::Config("gamma grid values must be finite".into()));
        }
        g.sort_by(|a, b| a.total_cmp(b));
        g.dedup();
        if g.is_empty() {
            return Err(ZslError::EmptyGrid);
        }
        Ok(g)
    }
}

impl fmt::Display for GammaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaGrid::Auto { points } => write!(f, "auto:{points}"),
            GammaGrid::Linear { lo, hi, points } => write!(f, "lin:{lo}:{hi}:{points}"),
            GammaGrid::Values(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl FromStr for GammaGrid {
    type Err = ZslError;

    /// `auto`, `auto:N`, `lin:LO:HI:N` or a comma-separated list of values.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || ZslError::Config(format!("bad gamma grid {s:?}"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let count = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let s = s.trim();
        if s == "auto" {
            return Ok(GammaGrid::default());
        }
        if let Some(rest) = s.strip_prefix("auto:") {
            return Ok(GammaGrid::Auto { points: count(rest)? });
        }
        if let Some(rest) = s.strip_prefix("lin:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            return Ok(GammaGrid::Linear {
                lo: num(parts[0])?,
                hi: num(parts[1])?,
                points: count(parts[2])?,
            });
        }
        if s.is_empty() {
            return Err(ZslError::EmptyGrid);
        }
        Ok(GammaGrid::Values(s.split(',').map(num).collect::<Result<_>>()?))
    }
}

/// Test or validation samples scored against a fixed candidate set.
///
/// Distances are computed once; predictions at any gamma reuse them.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    classes: Vec<usize>,
    seen_mask: Vec<bool>,
    dists: DMatrix<f64>,
    labels: Vec<usize>,
    seen_eval: BTreeSet<usize>,
    unseen_eval: BTreeSet<usize>,
}

impl EvalSetup {
    /// Seen flags come from `prototypes`. Every label must be a candidate.
    pub fn new(
        prototypes: &PrototypeSet,
        candidates: &BTreeSet<usize>,
        latent: &DMatrix<f64>,
        labels: &[usize],
    ) -> Result<EvalSetup> {
        if latent.nrows() != labels.len() {
            return Err(ZslError::DimensionMismatch(format!(
                "{} latent rows for {} labels",
                latent.nrows(),
                labels.len()
            )));
        }
        let dists = distance_table(prototypes, latent, candidates)?;
        let classes: Vec<usize> = candidates.iter().copied().collect();
        let seen_mask: Vec<bool> = classes
            .iter()
            .map(|&c| prototypes.is_seen(c).unwrap_or(false))
            .collect();
        let mut seen_eval = BTreeSet::new();
        let mut unseen_eval = BTreeSet::new();
        for &l in labels {
            match classes.binary_search(&l) {
                Ok(k) if seen_mask[k] => seen_eval.insert(l),
                Ok(_) => unseen_eval.insert(l),
                Err(_) => {
                    return Err(ZslError::Config(format!("label {l} is not a candidate class")));
                }
            };
        }
        Ok(EvalSetup {
            classes,
            seen_mask,
            dists,
            labels: labels.to_vec(),
            seen_eval,
            unseen_eval,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn candidates(&self) -> &[usize] {
        &self.classes
    }

    /// Label classes whose prototypes are flagged seen.
    pub fn seen_classes(&self) -> &BTreeSet<usize> {
        &self.seen_eval
    }

    pub fn unseen_classes(&self) -> &BTreeSet<usize> {
        &self.unseen_eval
    }

    /// Largest squared distance between a sample and a candidate prototype.
    pub fn d_max(&self) -> f64 {
        self.dists.iter().copied().fold(0.0, f64::max)
    }

    fn predict_row(&self, i: usize, gamma: f64) -> usize {
        let has_unseen = self.seen_mask.iter().any(|s| !s);
        let has_seen = self.seen_mask.iter().any(|&s| s);
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (k, &c) in self.classes.iter().enumerate() {
            let seen = self.seen_mask[k];
            // the infinite limits only restrict the candidate set
            let score = if gamma == f64::INFINITY && has_unseen {
                if seen {
                    continue;
                }
                -self.dists[(i, k)]
            } else if gamma == f64::NEG_INFINITY && has_seen {
                if !seen {
                    continue;
                }
                -self.dists[(i, k)]
            } else if gamma.is_infinite() {
                -self.dists[(i, k)]
            } else {
                calibrated_score(self.dists[(i, k)], seen, gamma)
            };
            if score > best.1 || best.0 == usize::MAX {
                best = (c, score);
            }
        }
        best.0
    }

    /// Calibrated predictions for every sample. `gamma = +inf` restricts to
    /// unseen candidates and `-inf` to seen ones.
    pub fn predict(&self, gamma: f64) -> Vec<usize> {
        (0..self.labels.len()).map(|i| self.predict_row(i, gamma)).collect()
    }

    /// `(A_S, A_U)`: mean per-class accuracy over seen and unseen label
    /// classes; zero for an empty side.
    pub fn accuracies(&self, gamma: f64) -> (f64, f64) {
        let preds = self.predict(gamma);
        let side = |classes: &BTreeSet<usize>| {
            if classes.is_empty() {
                0.0
            } else {
                per_class_accuracy(&preds, &self.labels, classes)
                    .map(|(_, m)| m)
                    .expect("every label class has samples")
            }
        };
        (side(&self.seen_eval), side(&self.unseen_eval))
    }

    fn require_both_sides(&self) -> Result<()> {
        if self.seen_eval.is_empty() {
            return Err(ZslError::EmptyValidation("no seen-class samples".into()));
        }
        if self.unseen_eval.is_empty() {
            return Err(ZslError::EmptyValidation("no unseen-class samples".into()));
        }
        Ok(())
    }
}

/// Grid value maximising the harmonic mean on `setup`; ties go to the
/// smallest gamma. Gamma is a penalty on seen classes, so negative grid
/// values are skipped.
pub fn fit_gamma(setup: &EvalSetup, grid: &[f64]) -> Result<f64> {
    setup.require_both_sides()?;
    if !grid.iter().any(|&g| g >= 0.0) {
        return Err(ZslError::EmptyGrid);
    }
    let mut best: Option<(f64, f64)> = None;
    for &g in grid.iter().filter(|&&g| g >= 0.0) {
        let (a_s, a_u) = setup.accuracies(g);
        let h = harmonic_mean(a_u, a_s);
        best = match best {
            Some((bg, bh)) if bh > h || (bh == h && bg <= g) => Some((bg, bh)),
            _ => Some((g, h)),
        };
    }
    Ok(best.expect("non-empty grid").0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub gamma: f64,
    pub a_s: f64,
    pub a_u: f64,
}

/// Area under the `(A_S, A_U)` curve.
///
/// Points are sorted by `A_S`, duplicate `A_S` keep the largest `A_U`, each
/// `A_U` is raised to the best value at any larger `A_S`, and the result is
/// integrated with the trapezoid rule.
pub fn ausuc_from_points(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|later, earlier| later.0 == earlier.0);
    let n = pts.len();
    if n < 2 {
        return 0.0;
    }
    for k in (0..n - 1).rev() {
        pts[k].1 = pts[k].1.max(pts[k + 1].1);
    }
    // Trapezoid sum rearranged by parts so that runs of equal A_U telescope
    // exactly.
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let mut area = x[n - 1] * y[n - 1] - x[0] * y[1];
    for k in 1..n - 1 {
        area -= x[k] * (y[k + 1] - y[k]);
    }
    for k in 0..n - 1 {
        area += 0.5 * (x[k + 1] - x[k]) * (y[k] - y[k + 1]);
    }
    area
}

/// Sweeps `grid`, adds the two infinite-gamma limits and integrates.
pub fn ausuc(setup: &EvalSetup, grid: &[f64]) -> Result<(f64, Vec<CurvePoint>)> {
    setup.require_both_sides()?;
    if grid.is_empty() {
        return Err(ZslError::EmptyGrid);
    }
    let curve: Vec<CurvePoint> = grid
        .iter()
        .map(|&gamma| {
            let (a_s, a_u) = setup.accuracies(gamma);
            CurvePoint { gamma, a_s, a_u }
        })
        .collect();
    let mut points: Vec<(f64, f64)> = curve.iter().map(|p| (p.a_s, p.a_u)).collect();
    points.push(setup.accuracies(f64::NEG_INFINITY));
    points.push(setup.accuracies(f64::INFINITY));
    Ok((ausuc_from_points(&points), curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Generalized per-class accuracy at the chosen gamma.
    pub per_class_acc: BTreeMap<usize, f64>,
    pub a_t: f64,
    pub a_u: f64,
    pub a_s: f64,
    pub h: f64,
    pub ausuc: f64,
    pub gamma: f64,
    pub curve: Vec<CurvePoint>,
}

impl EvalReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in [
            ("A_T", self.a_t),
            ("A_U", self.a_u),
            ("A_S", self.a_s),
            ("H", self.h),
            ("AUSUC", self.ausuc),
            ("gamma", self.gamma),
        ] {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("gamma,a_s,a_u\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{},{}", p.gamma, p.a_s, p.a_u);
        }
        out
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,accuracy\n");
        for (c, a) in &self.per_class_acc {
            let _ = writeln!(out, "{c},{a}");
        }
        out
    }
}

/// Full report. `gzsl` has all classes as candidates and test samples of
/// both seen and unseen classes; `tzsl` has only unseen candidates and
/// unseen test samples.
pub fn evaluate_full(gzsl: &EvalSetup, tzsl: &EvalSetup, gamma: f64, grid: &[f64]) -> Result<EvalReport> {
    gzsl.require_both_sides()?;
    if tzsl.unseen_eval.is_empty() || !tzsl.seen_eval.is_empty() {
        return Err(ZslError::Config(
            "traditional setup needs unseen candidates and unseen samples only".into(),
        ));
    }
    let (_, a_t) = per_class_accuracy(&tzsl.predict(0.0), &tzsl.labels, &tzsl.unseen_eval)?;
    let preds = gzsl.predict(gamma);
    let all: BTreeSet<usize> = gzsl.seen_eval.union(&gzsl.unseen_eval).copied().collect();
    let (per_class_acc, _) = per_class_accuracy(&preds, &gzsl.labels, &all)?;
    let (_, a_s) = per_class_accuracy(&preds, &gzsl.labels, &gzsl.seen_eval)?;
    let (_, a_u) = per_class_accuracy(&preds, &gzsl.labels, &gzsl.unseen_eval)?;
    let (ausuc, curve) = ausuc(gzsl, grid)?;
    Ok(EvalReport {
        per_class_acc,
        a_t,
        a_u,
        a_s,
        h: harmonic_mean(a_u, a_s),
        ausuc,
        gamma,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn per_class_examples() {
        let classes: BTreeSet<usize> = [0, 1].into();
        let (_, m) = per_class_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 1], &classes).unwrap();
        assert_eq!(m, 1.0);
        let (acc, m) = per_class_accuracy(&[0, 0, 1, 0], &[0, 0, 1, 1], &classes).unwrap();
        assert_eq!(acc[&1], 0.5);
        assert_eq!(m, 0.75);
    }

    #[test]
    fn per_class_needs_samples() {
        let classes: BTreeSet<usize> = [0, 5].into();
        assert!(matches!(
            per_class_accuracy(&[0], &[0], &classes),
            Err(ZslError::EmptyClass(5))
        ));
    }

    #[test]
    fn harmonic_mean_examples() {
        assert!((harmonic_mean(62.2, 76.7) - 68.7).abs() < 0.05);
        assert_eq!(harmonic_mean(0.3, 0.3), 0.3);
        assert_eq!(harmonic_mean(0.0, 0.8), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn ausuc_triangle() {
        assert_eq!(ausuc_from_points(&[(1.0, 0.0), (0.5, 0.5), (0.0, 1.0)]), 0.5);
    }

    #[test]
    fn ausuc_unit_square_and_zero() {
        let pts = [(0.0, 1.0), (0.3, 1.0), (1.0, 1.0), (1.0, 0.2), (0.7, 0.9)];
        assert_eq!(ausuc_from_points(&pts), 1.0);
        assert_eq!(ausuc_from_points(&[(0.0, 0.0), (0.0, 0.0)]), 0.0);
    }

    #[test]
    fn grid_parse_round_trip() {
        for s in ["auto:201", "lin:-2:3.5:11", "-1,0,2.5"] {
            let g: GammaGrid = s.parse().unwrap();
            assert_eq!(g.to_string(), s);
        }
        assert_eq!("auto".parse::<GammaGrid>().unwrap(), GammaGrid::default());
        assert!("lin:1:2".parse::<GammaGrid>().is_err());
        assert!(matches!(GammaGrid::Values(vec![]).resolve(1.0), Err(ZslError::EmptyGrid)));
    }

    #[test]
    fn auto_grid_is_symmetric() {
        let g = GammaGrid::default().resolve(4.0).unwrap();
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], -4.0);
        assert_eq!(g[100], 0.0);
        assert_eq!(g[200], 4.0);
    }

    fn setup() -> EvalSetup {
        let protos = PrototypeSet::new(
            vec![0, 1, 2],
            DMatrix::from_row_slice(3, 1, &[0.0, 4.0, 10.0]),
            vec![true, true, false],
        )
        .unwrap();
        let latent = DMatrix::from_row_slice(5, 1, &[0.1, 3.8, 4.2, 9.0, 6.5]);
        let labels = [0, 1, 1, 2, 2];
        EvalSetup::new(&protos, &[0, 1, 2].into(), &latent, &labels).unwrap()
    }

    #[test]
    fn limits_restrict_candidates() {
        let s = setup();
        assert_eq!(s.predict(f64::NEG_INFINITY), vec![0, 1, 1, 1, 1]);
        assert_eq!(s.predict(f64::INFINITY), vec![2, 2, 2, 2, 2]);
        assert_eq!(s.accuracies(0.0), (1.0, 0.5));
        assert_eq!(s.accuracies(10.0), (1.0, 1.0));
    }

    #[test]
    fn fit_gamma_prefers_smallest_on_plateau() {
        let s = setup();
        // the sample at 6.5 moves to class 2 for gamma > 6 (a tie at 6 goes
        // to class 1); seen samples stay seen up to gamma = 33.6
        let grid: Vec<f64> = (-20..=40).map(|k| k as f64).collect();
        let g = fit_gamma(&s, &grid).unwrap();
        assert_eq!(g, 7.0);
        assert_eq!(s.accuracies(g), (1.0, 1.0));
        let (a_s, a_u) = s.accuracies(g - 1.0);
        assert!(harmonic_mean(a_u, a_s) < 1.0);
    }

    #[test]
    fn fit_gamma_skips_negative_values() {
        let s = setup();
        assert_eq!(fit_gamma(&s, &[-30.0, -10.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(fit_gamma(&s, &[-3.0]), Err(ZslError::EmptyGrid)));
    }

    #[test]
    fn fit_gamma_needs_both_sides() {
        let protos = PrototypeSet::new(vec![0, 1], DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), vec![true, false]).unwrap();
        let latent = DMatrix::from_row_slice(1, 1, &[1.0]);
        let s = EvalSetup::new(&protos, &[0, 1].into(), &latent, &[1]).unwrap();
        let err = fit_gamma(&s, &[0.0]).unwrap_err();
        assert!(err.to_string().contains("empty validation sets"));
    }

    #[test]
    fn perfect_setup_has_unit_ausuc() {
        let s = setup();
        let grid = GammaGrid::default().resolve(s.d_max()).unwrap();
        let (area, curve) = ausuc(&s, &grid).unwrap();
        assert_eq!(area, 1.0);
        assert_eq!(curve.len(), grid.len());
    }

    proptest! {
        #[test]
        fn harmonic_between_min_and_mean(a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
            let h = harmonic_mean(a, b);
            prop_assert!(h >= a.min(b) * (1.0 - 1e-12));
            prop_assert!(h <= 0.5 * (a + b) * (1.0 + 1e-12));
        }

        #[test]
        fn duplicating_a_class_keeps_accuracy(
            pairs in proptest::collection::vec((0usize..3, 0usize..3), 3..40),
            dup in 0usize..3,
        ) {
            let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let classes: BTreeSet<usize> = labels.iter().copied().collect();
            let (acc, mean) = per_class_accuracy(&preds, &labels, &classes).unwrap();
            let mut p2 = preds.clone();
            let mut l2 = labels.clone();
            for (p, l) in preds.iter().zip(&labels) {
                if *l == dup {
                    p2.push(*p);
                    l2.push(*l);
                }
            }
            let (acc2, mean2) = per_class_accuracy(&p2, &l2, &classes).unwrap();
            prop_assert_eq!(acc, acc2);
            prop_assert_eq!(mean, mean2);
        }

        #[test]
        fn ausuc_in_unit_interval(pts in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..20)) {
            let a = ausuc_from_points(&pts);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
        }
    }
}
