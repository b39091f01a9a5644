//! Synthetic ellipsoid phantoms, the volumetric Dice score, and split-level
//! summaries.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::components::{label_components, Connectivity, Normality};
use crate::pipeline::{run_case, PipelineConfig, StageModels};
use crate::volume::{Dims3, Grid, Mask, Spacing, Volume};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub dims: Dims3,
    pub spacing: Spacing,
    /// 1 or 2.
    pub n_kidneys: usize,
    /// Semi-axis ranges in mm along (depth, rows, cols), sampled uniformly.
    pub semi_axes_mm: [(f32, f32); 3],
    /// Uniform jitter of each centre in mm along (depth, rows, cols).
    pub center_jitter_mm: [f32; 3],
    pub kidney_intensity: f32,
    pub background_intensity: f32,
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for PhantomSpec {
    /// Desk-scale noiseless phantom: 64×96×96 at the normalized spacing.
    fn default() -> Self {
        PhantomSpec {
            dims: Dims3::new(64, 96, 96),
            spacing: Spacing::NORMALIZED,
            n_kidneys: 2,
            semi_axes_mm: [(18.0, 27.0), (8.0, 12.5), (6.5, 9.5)],
            center_jitter_mm: [6.0, 3.0, 3.0],
            kidney_intensity: 1.0,
            background_intensity: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// One placed ellipsoid, in mm from the grid origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let s: f64 = (0..3)
            .map(|i| ((p[i] - self.center_mm[i]) / self.semi_axes_mm[i]).powi(2))
            .sum();
        s <= 1.0
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Phantom(m));
        if !(1..=2).contains(&self.n_kidneys) {
            return bad(format!("n_kidneys must be 1 or 2, got {}", self.n_kidneys));
        }
        if self.dims.is_empty() {
            return bad(format!("dims {:?} must be positive", self.dims.as_array()));
        }
        Spacing::new(self.spacing.d, self.spacing.h, self.spacing.w)?;
        for (lo, hi) in self.semi_axes_mm {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!(
                    "semi-axis range ({lo}, {hi}) is not a positive interval"
                ));
            }
        }
        if self
            .center_jitter_mm
            .iter()
            .any(|j| !(j.is_finite() && *j >= 0.0))
        {
            return bad(format!(
                "centre jitter {:?} must be non-negative",
                self.center_jitter_mm
            ));
        }
        if self.kidney_intensity == self.background_intensity {
            return bad("kidney and background intensities must differ".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise sigma {} must be non-negative",
                self.noise_sigma
            ));
        }
        Ok(())
    }

    fn extent_mm(&self) -> [f64; 3] {
        let s = [self.spacing.d, self.spacing.h, self.spacing.w];
        let n = self.dims.as_array();
        [0, 1, 2].map(|i| (n[i] - 1) as f64 * s[i] as f64)
    }

    /// Draws the ellipsoids for this spec's seed.
    pub fn place(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Ellipsoid>> {
        self.validate()?;
        let extent = self.extent_mm();
        let first_side = if self.n_kidneys == 1 {
            rng.random_range(0..2usize)
        } else {
            0
        };
        let mut out = Vec::with_capacity(self.n_kidneys);
        for k in 0..self.n_kidneys {
            let side = first_side + k;
            let semi = [0, 1, 2].map(|i| {
                let (lo, hi) = self.semi_axes_mm[i];
                rng.random_range(lo as f64..=hi as f64)
            });
            let nominal = [
                extent[0] / 2.0,
                extent[1] / 2.0,
                extent[2] * (1 + 2 * side) as f64 / 4.0,
            ];
            let center = [0, 1, 2].map(|i| {
                let j = self.center_jitter_mm[i] as f64;
                nominal[i]
                    + if j > 0.0 {
                        rng.random_range(-j..=j)
                    } else {
                        0.0
                    }
            });
            for i in 0..3 {
                if center[i] - semi[i] < 0.0 || center[i] + semi[i] > extent[i] {
                    return Err(Error::Phantom(format!(
                        "kidney {k} (centre {center:?} mm, semi-axes {semi:?} mm) leaves the volume"
                    )));
                }
            }
            out.push(Ellipsoid {
                center_mm: center,
                semi_axes_mm: semi,
            });
        }
        Ok(out)
    }
}

/// Ellipsoid kidneys with Gaussian intensity noise. Deterministic per seed.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, Mask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kidneys = spec.place(&mut rng)?;
    let dims = spec.dims;
    let s = spec.spacing;
    let mut mask = vec![0u8; dims.len()];
    for d in 0..dims.depth {
        for r in 0..dims.rows {
            for c in 0..dims.cols {
                let p = [
                    d as f64 * s.d as f64,
                    r as f64 * s.h as f64,
                    c as f64 * s.w as f64,
                ];
                let inside = kidneys.iter().filter(|e| e.contains(p)).count();
                if inside > 1 {
                    return Err(Error::Phantom(format!(
                        "kidneys overlap at voxel ({d}, {r}, {c})"
                    )));
                }
                mask[dims.index(d, r, c)] = inside as u8;
            }
        }
    }
    let mask = Grid::new(dims, s, mask)?;
    let found = label_components(&mask, Connectivity::TwentySix).count();
    if found != spec.n_kidneys {
        return Err(Error::Phantom(format!(
            "expected {} separate kidneys, rasterized {found} components",
            spec.n_kidneys
        )));
    }
    let sigma = spec.noise_sigma;
    let data = mask
        .data()
        .iter()
        .map(|&m| {
            let base = if m == 1 {
                spec.kidney_intensity
            } else {
                spec.background_intensity
            };
            if sigma > 0.0 {
                base + sigma * rng.sample::<f32, _>(StandardNormal)
            } else {
                base
            }
        })
        .collect();
    Ok((Grid::new(dims, s, data)?, mask))
}

/// Volumetric Dice similarity coefficient; 1.0 when both masks are empty.
pub fn dsc(a: &Mask, b: &Mask) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::mismatch(
            "dsc geometry",
            (a.dims().as_array(), a.spacing()),
            (b.dims().as_array(), b.spacing()),
        ));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        both += (x & y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single score.
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

pub fn summarize(scores: &[f64]) -> Result<Summary> {
    if scores.is_empty() {
        return Err(Error::Empty("no scores to summarize"));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = if scores.len() > 1 {
        let ss: f64 = scores.iter().map(|x| (x - mean) * (x - mean)).sum();
        num_traits::Float::sqrt(ss / (n - 1.0))
    } else {
        0.0
    };
    Ok(Summary {
        mean,
        std,
        max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: scores.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseScore {
    pub id: String,
    pub coarse_dsc: f64,
    pub fine_dsc: f64,
    pub verdict: Normality,
}

/// A test case with ground truth.
#[derive(Clone, Debug)]
pub struct EvalCase {
    pub id: String,
    pub volume: Volume,
    pub truth: Mask,
}

#[derive(Clone, Debug)]
pub struct SplitReport {
    /// Sorted by case id.
    pub scores: Vec<CaseScore>,
    /// (case id, error), sorted by case id.
    pub failures: Vec<(String, String)>,
    /// `None` when every case failed.
    pub coarse: Option<Summary>,
    pub fine: Option<Summary>,
}

impl SplitReport {
    /// Builds summaries from already-scored cases.
    pub fn from_scores(mut scores: Vec<CaseScore>, mut failures: Vec<(String, String)>) -> Self {
        scores.sort_by(|a, b| a.id.cmp(&b.id));
        failures.sort();
        let col =
            |f: fn(&CaseScore) -> f64| summarize(&scores.iter().map(f).collect::<Vec<_>>()).ok();
        SplitReport {
            coarse: col(|s| s.coarse_dsc),
            fine: col(|s| s.fine_dsc),
            scores,
            failures,
        }
    }
}

pub fn score_case(
    case: &EvalCase,
    models: &StageModels<'_>,
    cfg: &PipelineConfig,
) -> Result<CaseScore> {
    let r = run_case(&case.volume, models, cfg)?;
    Ok(CaseScore {
        id: case.id.clone(),
        coarse_dsc: dsc(&r.coarse_mask, &case.truth)?,
        fine_dsc: dsc(&r.fine_mask, &case.truth)?,
        verdict: r.verdict.verdict,
    })
}

/// Runs every case; a failing case is recorded and the rest continue.
pub fn evaluate_split(
    cases: &[EvalCase],
    models: &StageModels<'_>,
    cfg: &PipelineConfig,
) -> SplitReport {
    let run = |c: &EvalCase| score_case(c, models, cfg).map_err(|e| (c.id.clone(), format!("{e}")));
    // Slice-level work inside each case already runs in parallel.
    let results: Vec<_> = cases.iter().map(run).collect();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => scores.push(s),
            Err(f) => failures.push(f),
        }
    }
    SplitReport::from_scores(scores, failures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{classify, component_stats};
    use crate::nn::threshold_model;

    fn unit_spec(a: f32, b: f32, c: f32) -> PhantomSpec {
        PhantomSpec {
            dims: Dims3::new(40, 40, 80),
            spacing: Spacing::new(1.0, 1.0, 1.0).unwrap(),
            semi_axes_mm: [(a, a), (b, b), (c, c)],
            center_jitter_mm: [0.0; 3],
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn ellipsoid_count_close_to_analytic_volume() {
        for (a, b, c) in [(10.0, 8.0, 6.0), (12.0, 12.0, 12.0), (15.0, 7.5, 9.0)] {
            let spec = PhantomSpec {
                n_kidneys: 1,
                ..unit_spec(a, b, c)
            };
            let (_, m) = generate_phantom(&spec).unwrap();
            let exact = 4.0 / 3.0 * core::f64::consts::PI * (a * b * c) as f64;
            let n = m.count_foreground() as f64;
            assert!((n - exact).abs() / exact < 0.05, "{n} vs {exact}");
        }
    }

    #[test]
    fn mask_matches_brute_force_ellipsoid_test() {
        let spec = PhantomSpec {
            seed: 7,
            ..PhantomSpec::default()
        };
        let (_, m) = generate_phantom(&spec).unwrap();
        let kidneys = spec.place(&mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let dims = m.dims();
        let mut n = 0;
        for d in 0..dims.depth {
            for r in 0..dims.rows {
                for c in 0..dims.cols {
                    let p = [
                        d as f64 * 3.0,
                        r as f64 * 0.7816f32 as f64,
                        c as f64 * 0.7816f32 as f64,
                    ];
                    let inside = kidneys.iter().any(|e| e.contains(p));
                    assert_eq!(m.get(d, r, c) == 1, inside);
                    n += inside as usize;
                }
            }
        }
        assert_eq!(n, m.count_foreground());
    }

    #[test]
    fn same_seed_same_phantom() {
        let spec = PhantomSpec {
            noise_sigma: 0.3,
            seed: 11,
            ..PhantomSpec::default()
        };
        assert_eq!(
            generate_phantom(&spec).unwrap(),
            generate_phantom(&spec).unwrap()
        );
        let other = PhantomSpec {
            seed: 12,
            ..spec.clone()
        };
        assert_ne!(
            generate_phantom(&spec).unwrap().0,
            generate_phantom(&other).unwrap().0
        );
    }

    #[test]
    fn two_kidney_phantom_is_normal() {
        let (_, m) = generate_phantom(&PhantomSpec::default()).unwrap();
        let stats = component_stats(&label_components(&m, Connectivity::TwentySix));
        let smallest = stats.iter().map(|s| s.voxel_count).min().unwrap();
        assert_eq!(classify(&stats, smallest).verdict, Normality::Normal);
    }

    #[test]
    fn noiseless_intensities_follow_mask() {
        let (v, m) = generate_phantom(&PhantomSpec::default()).unwrap();
        assert!(v.data().iter().zip(m.data()).all(|(&x, &y)| x == y as f32));
    }

    #[test]
    fn invalid_specs_rejected() {
        let overlap = PhantomSpec {
            semi_axes_mm: [(20.0, 20.0), (20.0, 20.0), (30.0, 30.0)],
            ..unit_spec(1.0, 1.0, 1.0)
        };
        assert!(matches!(generate_phantom(&overlap), Err(Error::Phantom(_))));
        let outside = unit_spec(25.0, 5.0, 5.0);
        assert!(matches!(generate_phantom(&outside), Err(Error::Phantom(_))));
        let flat = PhantomSpec {
            kidney_intensity: 0.0,
            ..PhantomSpec::default()
        };
        assert!(flat.validate().is_err());
        assert!(PhantomSpec {
            n_kidneys: 3,
            ..PhantomSpec::default()
        }
        .validate()
        .is_err());
    }

    fn mask(data: Vec<u8>) -> Mask {
        Mask::new(Dims3::new(1, 1, data.len()), Spacing::NORMALIZED, data).unwrap()
    }

    #[test]
    fn dsc_hand_counts() {
        assert_eq!(
            dsc(&mask(vec![1, 1, 0]), &mask(vec![1, 1, 0])).unwrap(),
            1.0
        );
        assert_eq!(
            dsc(&mask(vec![1, 0, 0]), &mask(vec![0, 1, 0])).unwrap(),
            0.0
        );
        assert_eq!(
            dsc(&mask(vec![1, 1, 0]), &mask(vec![0, 1, 1])).unwrap(),
            0.5
        );
        assert_eq!(dsc(&mask(vec![0; 3]), &mask(vec![0; 3])).unwrap(), 1.0);
        assert!(dsc(&mask(vec![0; 3]), &mask(vec![0; 4])).is_err());
    }

    #[test]
    fn summary_hand_values() {
        let s = summarize(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.std, s.max, s.min), (1.0, 0.0, 1.0, 1.0));
        let s = summarize(&[0.8, 1.0]).unwrap();
        assert!((s.mean - 0.9).abs() < 1e-12);
        assert!((s.std - 0.141_421_356).abs() < 1e-8);
        assert_eq!((s.max, s.min), (1.0, 0.8));
        assert_eq!(summarize(&[0.7]).unwrap().std, 0.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn split_rows_sorted_and_failures_kept() {
        let small = |seed| {
            let spec = PhantomSpec {
                dims: Dims3::new(24, 32, 48),
                semi_axes_mm: [(9.0, 12.0), (5.0, 6.0), (5.0, 6.0)],
                center_jitter_mm: [0.0; 3],
                seed,
                ..PhantomSpec::default()
            };
            generate_phantom(&spec).unwrap()
        };
        let mut cases: Vec<EvalCase> = ["b", "a"]
            .iter()
            .zip([1, 2])
            .map(|(id, seed)| {
                let (volume, truth) = small(seed);
                EvalCase {
                    id: (*id).into(),
                    volume,
                    truth,
                }
            })
            .collect();
        let (v, _) = small(3);
        cases.push(EvalCase {
            id: "c".into(),
            volume: v,
            truth: mask(vec![0; 2]),
        });
        let t = threshold_model(0.5);
        let models = StageModels {
            coarse: &t,
            abnormal: &t,
            fine: &t,
        };
        let cfg = PipelineConfig {
            coarse_dims: (32, 32),
            fine_dims: (24, 24),
            abnormal_dims: (16, 32),
            th_vn: 50,
            ..PipelineConfig::default()
        };
        let r = evaluate_split(&cases, &models, &cfg);
        let ids: Vec<_> = r.scores.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.fine.unwrap().mean, 1.0);
    }
}
