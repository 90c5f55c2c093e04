//! Composition of Beltrami coefficients, the Teichmüller distance between
//! sampled maps, the hyperbolic distance on the disk, and the isometry audit
//! of the entire family.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beltrami::{entire_inverse_with, par_map, Convention, LsParams};
use crate::error::{LabError, Result};
use crate::field::{ComplexField, GridSpec};
use crate::metric::Metric;
use crate::qc::beltrami_coefficient;
use crate::record::MapRecord;

/// `((mu_f - mu_g) / (1 - conj(mu_f) mu_g)) g_phase`, with
/// `g_phase = conj(g_z) / g_z`.
pub fn compose_mu(mu_f: Complex64, mu_g: Complex64, g_phase: Complex64) -> Result<Complex64> {
    if !(mu_g.norm() < 1.0) {
        return Err(LabError::Degenerate(format!("|mu_g| = {} is not below 1", mu_g.norm())));
    }
    let den = 1.0 - mu_f.conj() * mu_g;
    if den.norm() < 1e-12 {
        return Err(LabError::Degenerate(format!("|1 - conj(mu_f) mu_g| = {:.3e}", den.norm())));
    }
    Ok((mu_f - mu_g) / den * g_phase)
}

/// `|compose_mu(mu_f, mu_g, phase)|`, which does not depend on the phase.
pub fn compose_mu_modulus(mu_f: Complex64, mu_g: Complex64) -> Result<f64> {
    Ok(compose_mu(mu_f, mu_g, Complex64::new(1.0, 0.0))?.norm())
}

/// `log((1 + t) / (1 - t))` with `t = |a - b| / |1 - conj(a) b|`.
pub fn hyperbolic_distance(a: Complex64, b: Complex64) -> Result<f64> {
    for z in [a, b] {
        if !(z.norm() < 1.0) {
            return Err(LabError::AlphaOutOfDisk(z.norm()));
        }
    }
    let t = (a - b).norm() / (1.0 - a.conj() * b).norm();
    Ok(((1.0 + t) / (1.0 - t)).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// `log sup K(z, f o g^{-1})` over the nodes.
    pub d_teich: f64,
    /// Hyperbolic distance of the two family parameters, when both exist.
    pub d_hyperbolic: Option<f64>,
    pub sup_location: (usize, usize),
    /// `sup - inf` of `log K` over the nodes.
    pub spread: f64,
}

/// Teichmüller distance over all nodes where both coefficients exist.
pub fn teich_distance(f: &MapRecord, g: &MapRecord) -> Result<DistanceReport> {
    teich_distance_in(f, g, 1.0)
}

/// [`teich_distance`] restricted to the central `fraction` of the grid.
pub fn teich_distance_in(f: &MapRecord, g: &MapRecord, fraction: f64) -> Result<DistanceReport> {
    if !f.field.grid().matches(g.field.grid()) {
        return Err(LabError::GridMismatch);
    }
    let mu_f = beltrami_coefficient(&f.field)?;
    let mu_g = beltrami_coefficient(&g.field)?;
    let (d, loc, spread) = distance_of_coefficients(&mu_f, &mu_g, fraction)?;
    let d_hyperbolic = match (f.alpha, g.alpha) {
        (Some(a), Some(b)) => Some(hyperbolic_distance(a, b)?),
        _ => None,
    };
    Ok(DistanceReport { d_teich: d, d_hyperbolic, sup_location: loc, spread })
}

/// `(sup log K, argmax, spread)` of the composed coefficient, modulus only.
fn distance_of_coefficients(mu_f: &ComplexField, mu_g: &ComplexField, fraction: f64) -> Result<(f64, (usize, usize), f64)> {
    let (i0, j0, nx, ny) = mu_f.grid().central_window(fraction);
    let (mut sup, mut inf, mut loc) = (f64::NEG_INFINITY, f64::INFINITY, (0, 0));
    for j in j0..j0 + ny {
        for i in i0..i0 + nx {
            let (Some(a), Some(b)) = (mu_f.get(i, j), mu_g.get(i, j)) else { continue };
            let Ok(m) = compose_mu_modulus(a, b) else { continue };
            if !(m < 1.0) {
                continue;
            }
            let log_k = ((1.0 + m) / (1.0 - m)).ln();
            if log_k > sup {
                sup = log_k;
                loc = (i, j);
            }
            inf = inf.min(log_k);
        }
    }
    if sup == f64::NEG_INFINITY {
        return Err(LabError::AllDegenerate);
    }
    Ok((sup, loc, sup - inf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub metric_id: String,
    pub alphas: Vec<Complex64>,
    /// Pairwise Teichmüller distances between the inverses `g_alpha`.
    pub d_teich: Vec<Vec<f64>>,
    pub d_hyperbolic: Vec<Vec<f64>>,
    /// `max |d_teich - d_hyperbolic|`; `None` for fewer than two members.
    pub max_discrepancy: Option<f64>,
    /// Largest spread of `log K` over any pair.
    pub max_spread: Option<f64>,
}

/// Fraction of the grid the isometry audit evaluates; the outer band holds
/// the boundary layer of the least-squares solve.
pub const ISOMETRY_WINDOW: f64 = 0.75;

/// Builds every family member over `metric`, compares the pairwise
/// Teichmüller distances of their inverses with the hyperbolic distances
/// of the parameters. The inverses share the target grid, where their
/// coefficients `alpha e^{-iv}` carry the same phase at every node.
pub fn isometry_audit(metric: &Metric, alphas: &[Complex64], grid: &GridSpec) -> Result<IsometryReport> {
    isometry_audit_with(metric, alphas, grid, ISOMETRY_WINDOW, &LsParams::default())
}

pub fn isometry_audit_with(
    metric: &Metric,
    alphas: &[Complex64],
    grid: &GridSpec,
    fraction: f64,
    params: &LsParams,
) -> Result<IsometryReport> {
    metric.as_flat()?;
    for a in alphas {
        if !(a.norm() < 1.0) {
            return Err(LabError::AlphaOutOfDisk(a.norm()));
        }
    }
    let inverses = par_map(alphas, |&a| entire_inverse_with(a, metric, grid, Convention::Harmonic, params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mus = inverses.iter().map(beltrami_coefficient).collect::<Result<Vec<_>>>()?;
    let n = alphas.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let entries = par_map(&pairs, |&(a, b)| distance_of_coefficients(&mus[a], &mus[b], fraction))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut d_teich = vec![vec![0.0; n]; n];
    let mut d_hyperbolic = vec![vec![0.0; n]; n];
    let (mut discrepancy, mut spread) = (None::<f64>, None::<f64>);
    for (&(a, b), &(d, _, s)) in pairs.iter().zip(&entries) {
        let dh = hyperbolic_distance(alphas[a], alphas[b])?;
        d_teich[a][b] = d;
        d_teich[b][a] = d;
        d_hyperbolic[a][b] = dh;
        d_hyperbolic[b][a] = dh;
        discrepancy = Some(discrepancy.unwrap_or(0.0).max((d - dh).abs()));
        spread = Some(spread.unwrap_or(0.0).max(s));
    }
    Ok(IsometryReport {
        metric_id: metric.id().to_string(),
        alphas: alphas.to_vec(),
        d_teich,
        d_hyperbolic,
        max_discrepancy: discrepancy,
        max_spread: spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{linear_composition_distortion, linear_map};
    use crate::metric::builtin_metric;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn square(h: f64) -> GridSpec {
        GridSpec::covering(-1.0, 1.0, -1.0, 1.0, h).unwrap()
    }

    fn linear_record(a: Complex64, grid: &GridSpec) -> MapRecord {
        MapRecord::new(linear_map(a).unwrap().sample(grid), builtin_metric("euclid").unwrap())
    }

    #[test]
    fn composition_cases() {
        let one = c(1.0, 0.0);
        assert_eq!(compose_mu(c(0.3, 0.2), c(0.3, 0.2), one).unwrap(), c(0.0, 0.0));
        assert_eq!(compose_mu(c(-0.5, 0.0), c(0.0, 0.0), one).unwrap(), c(-0.5, 0.0));
        // Oracle: |0.5 - 0.4i| / |1 - 0.3(-0.2 + 0.4i)| = sqrt(0.41) / sqrt(1.06^2 + 0.12^2).
        let (af, ag) = (c(0.3, 0.0), c(-0.2, 0.4));
        let expect = 0.41f64.sqrt() / (1.06f64 * 1.06 + 0.12 * 0.12).sqrt();
        assert!((expect - 0.600234283491943).abs() < 1e-14);
        for v in [0.0, 0.7, -2.1, 3.0] {
            let e = Complex64::from_polar(1.0, v);
            assert!((compose_mu(af * e, ag * e, one).unwrap().norm() - expect).abs() < 1e-12);
        }
        assert!(matches!(compose_mu(c(0.0, 0.0), c(1.0, 0.0), one), Err(LabError::Degenerate(_))));
        assert!(matches!(compose_mu(c(2.0, 0.0), c(0.5, 0.0), one), Err(LabError::Degenerate(_))));
    }

    #[test]
    fn hyperbolic_cases() {
        assert_eq!(hyperbolic_distance(c(0.3, 0.1), c(0.3, 0.1)).unwrap(), 0.0);
        let d = hyperbolic_distance(c(0.0, 0.0), c(0.5, 0.0)).unwrap();
        assert!((d - 3f64.ln()).abs() < 1e-12);
        assert!((d - 1.0986123).abs() < 1e-7);
        assert!(matches!(hyperbolic_distance(c(1.0, 0.0), c(0.0, 0.0)), Err(LabError::AlphaOutOfDisk(_))));
    }

    #[test]
    fn linear_distances() {
        let grid = square(0.125);
        let f = linear_record(c(2.0, 0.0), &grid);
        let g = linear_record(c(1.0, 0.0), &grid);
        let r = teich_distance(&f, &g).unwrap();
        assert!((r.d_teich - 3f64.ln()).abs() < 1e-12);
        assert!(r.spread < 1e-12);
        assert_eq!(r.d_hyperbolic, None);
        assert_eq!(teich_distance(&f, &f).unwrap().d_teich, 0.0);
        for (a, b) in [(c(1.5, 0.5), c(0.8, -0.3)), (c(3.0, -1.0), c(1.2, 0.4))] {
            let d = teich_distance(&linear_record(a, &grid), &linear_record(b, &grid)).unwrap().d_teich;
            assert!((d - linear_composition_distortion(a, b).ln()).abs() < 1e-10);
        }
        let other = linear_record(c(1.0, 0.0), &square(0.25));
        assert!(matches!(teich_distance(&f, &other), Err(LabError::GridMismatch)));
    }

    #[test]
    fn metric_axioms_on_linear_triples() {
        let grid = square(0.25);
        let recs: Vec<MapRecord> = [c(2.0, 0.0), c(1.0, 0.0), c(1.3, 0.6), c(0.9, -0.4)]
            .iter()
            .map(|&a| linear_record(a, &grid))
            .collect();
        let d = |a: usize, b: usize| teich_distance(&recs[a], &recs[b]).unwrap().d_teich;
        for a in 0..recs.len() {
            assert_eq!(d(a, a), 0.0);
            for b in 0..recs.len() {
                assert!((d(a, b) - d(b, a)).abs() <= 1e-10);
                for m in 0..recs.len() {
                    assert!(d(a, b) <= d(a, m) + d(m, b) + 1e-8);
                }
            }
        }
    }

    #[test]
    fn isometry_euclid_exact() {
        let alphas = [c(0.0, 0.0), c(0.3, 0.0), c(-0.2, 0.4)];
        let r = isometry_audit(&builtin_metric("euclid").unwrap(), &alphas, &square(1.0 / 16.0)).unwrap();
        assert!(r.max_discrepancy.unwrap() <= 1e-10);
        assert!(r.max_spread.unwrap() <= 1e-9);
        assert!((r.d_hyperbolic[0][1] - (1.3f64 / 0.7).ln()).abs() < 1e-12);
        let single = isometry_audit(&builtin_metric("euclid").unwrap(), &alphas[..1], &square(0.25)).unwrap();
        assert_eq!(single.max_discrepancy, None);
        assert!(matches!(
            isometry_audit(&builtin_metric("gauss_nonflat").unwrap(), &alphas, &square(0.25)),
            Err(LabError::NotFlat(_))
        ));
        assert!(matches!(
            isometry_audit(&builtin_metric("euclid").unwrap(), &[c(1.0, 0.0)], &square(0.25)),
            Err(LabError::AlphaOutOfDisk(_))
        ));
    }

    #[test]
    fn isometry_exp_x_converges() {
        let alphas = [c(0.0, 0.0), c(0.3, 0.0), c(-0.2, 0.4)];
        let exp_x = builtin_metric("exp_x").unwrap();
        let coarse = isometry_audit(&exp_x, &alphas, &square(1.0 / 32.0)).unwrap();
        let fine = isometry_audit(&exp_x, &alphas, &square(1.0 / 64.0)).unwrap();
        assert!(fine.max_discrepancy.unwrap() <= 2e-2);
        assert!(fine.max_spread.unwrap() <= 2e-2);
        assert!(fine.max_discrepancy.unwrap() < coarse.max_discrepancy.unwrap());
        assert!(fine.max_spread.unwrap() < coarse.max_spread.unwrap());
    }

    proptest! {
        #[test]
        fn modulus_ignores_phase(fr in -0.9f64..0.9, fi in -0.4f64..0.4, gr in -0.6f64..0.6, gi in -0.6f64..0.6, t in -3.2f64..3.2) {
            let (mf, mg) = (c(fr, fi), c(gr, gi));
            prop_assume!(mg.norm() < 0.99 && mf.norm() < 0.99);
            let base = compose_mu(mf, mg, c(1.0, 0.0)).unwrap().norm();
            prop_assert_eq!(base.to_bits(), compose_mu_modulus(mf, mg).unwrap().to_bits());
            // Multiplying by a unit phase only rounds.
            let rotated = compose_mu(mf, mg, Complex64::from_polar(1.0, t)).unwrap().norm();
            prop_assert!((base - rotated).abs() <= 4.0 * f64::EPSILON * base.max(1e-300));
        }

        #[test]
        fn hyperbolic_is_mobius_invariant(ar in -0.6f64..0.6, ai in -0.6f64..0.6, br in -0.6f64..0.6, bi in -0.6f64..0.6) {
            let (a, b) = (c(ar, ai), c(br, bi));
            let k = c(0.37, -0.21);
            let m = |w: Complex64| (w - k) / (1.0 - k.conj() * w);
            let d0 = hyperbolic_distance(a, b).unwrap();
            let d1 = hyperbolic_distance(m(a), m(b)).unwrap();
            prop_assert!((d0 - d1).abs() <= 1e-12);
            prop_assert!((d0 - hyperbolic_distance(b, a).unwrap()).abs() <= 1e-15);
        }
    }
}
