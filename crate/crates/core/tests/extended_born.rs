//! Guided-momentum sampling on plane-wave sums against a grid quadrature.

use factum_core::dbb::{
    extended_born_check, BornCheckConfig, PlaneWave, PlaneWaveSum, TwoWaveState, Vec3,
};
use factum_core::hilbert::c;
use factum_core::C64;

/// `∫ ħ Im(ψ̄ ∇ψ) / ∫ |ψ|²` on a midpoint grid, with `∇ψ` from central
/// differences of the evaluated field.
fn quadrature_mean(w: &PlaneWaveSum, n: usize) -> Vec3 {
    let l = w.box_side;
    let h = l / n as f64;
    let fd = 1e-6 * h;
    let mut num = [0.0; 3];
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let r = [
                    (i as f64 + 0.5) * h,
                    (j as f64 + 0.5) * h,
                    (k as f64 + 0.5) * h,
                ];
                let psi = w.psi(r);
                den += psi.norm_sqr();
                for (axis, acc) in num.iter_mut().enumerate() {
                    let (mut a, mut b) = (r, r);
                    a[axis] += fd;
                    b[axis] -= fd;
                    let grad: C64 = (w.psi(a) - w.psi(b)) / (2.0 * fd);
                    *acc += w.hbar * (psi.conj() * grad).im;
                }
            }
        }
    }
    num.map(|x| x / den)
}

fn unequal() -> PlaneWaveSum {
    PlaneWaveSum::new(
        vec![
            PlaneWave {
                weight: c(1.0, 0.0),
                momentum: [1.0, 0.0, -2.0],
            },
            PlaneWave {
                weight: c(0.0, 0.5),
                momentum: [1.0, 0.0, 2.0],
            },
        ],
        std::f64::consts::PI,
        1.0,
    )
    .unwrap()
}

#[test]
fn quadrature_oracle_agrees_with_closed_form_average() {
    // the box holds whole periods of the cross term, which then averages out
    let q = quadrature_mean(&unequal(), 24);
    let expected = [1.0, 0.0, (1.0 * -2.0 + 0.25 * 2.0) / 1.25];
    for i in 0..3 {
        assert!((q[i] - expected[i]).abs() < 1e-6, "{q:?}");
    }
}

#[test]
fn unequal_weights_match_quadrature_mean() {
    let w = unequal();
    let oracle = quadrature_mean(&w, 24);
    let rec = extended_born_check(
        &w,
        &BornCheckConfig {
            n_samples: 400_000,
            bin_width: None,
        },
        31,
    )
    .unwrap();
    assert!((rec.histogram_mass - 1.0).abs() < 1e-9);
    let m = rec.guided_histogram.mean();
    let diff =
        ((m[0] - oracle[0]).powi(2) + (m[1] - oracle[1]).powi(2) + (m[2] - oracle[2]).powi(2))
            .sqrt();
    let scale = (oracle[0].powi(2) + oracle[1].powi(2) + oracle[2].powi(2)).sqrt();
    assert!(diff < 0.01 * scale, "{m:?} vs {oracle:?}");
    // the guided momentum varies with position
    assert!(rec.guided_std[2] > 0.1);
}

#[test]
fn single_plane_wave_is_a_delta() {
    let w = PlaneWaveSum::new(
        vec![PlaneWave {
            weight: c(0.3, -0.4),
            momentum: [0.5, -1.0, 2.0],
        }],
        5.0,
        1.0,
    )
    .unwrap();
    let rec = extended_born_check(
        &w,
        &BornCheckConfig {
            n_samples: 20_000,
            bin_width: None,
        },
        3,
    )
    .unwrap();
    assert_eq!(rec.guided_histogram.cells().len(), 1);
    assert_eq!(rec.guided_std, [0.0; 3]);
    assert_eq!(rec.guided_mean, [0.5, -1.0, 2.0]);
    assert!((rec.histogram_mass - 1.0).abs() < 1e-9);
    assert!(rec.total_variation < 1e-9);
}

#[test]
fn equal_weight_two_wave_is_a_delta_at_p0() {
    let st = TwoWaveState::electron_default();
    let w = PlaneWaveSum::from_two_wave(&st, [c(1.0, 0.0), c(1.0, 0.0)], 20.0 * st.fringe_period())
        .unwrap();
    let rec = extended_born_check(
        &w,
        &BornCheckConfig {
            n_samples: 50_000,
            bin_width: None,
        },
        4,
    )
    .unwrap();
    let p0 = st.guided_momentum();
    assert_eq!(rec.guided_histogram.cells().len(), 1);
    let cell = *rec.guided_histogram.cells().keys().next().unwrap();
    assert_eq!(cell, rec.guided_histogram.cell_of(p0));
    assert!((rec.histogram_mass - 1.0).abs() < 1e-9);
    // the pair-sum spectrum sits at p₁ + p₂ = 2p⁰, disjoint from the guided delta
    assert_eq!(rec.candidate_spectrum.len(), 1);
    assert!((rec.candidate_spectrum[0].momentum[0] - 2.0 * p0[0]).abs() < 1e-12 * p0[0]);
    assert!((rec.total_variation - 1.0).abs() < 1e-9);
}

#[test]
fn sampling_is_deterministic() {
    let w = unequal();
    let cfg = BornCheckConfig {
        n_samples: 10_000,
        bin_width: Some(1e-3),
    };
    assert_eq!(
        extended_born_check(&w, &cfg, 9).unwrap(),
        extended_born_check(&w, &cfg, 9).unwrap()
    );
}
