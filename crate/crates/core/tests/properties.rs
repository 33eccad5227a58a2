use std::f64::consts::PI;

use ngd_core::analysis::{causality_front_test, golden_rule_residual};
use ngd_core::circuit::{
    make_ngd_compensator, opamp_block, rc_lowpass_block, rlc_bandpass_block, CompensatorSpec, Element, OpAmpModel,
};
use ngd_core::lti::{compose_feedback, evaluate_grid, impulse_response, TransferBlock};
use ngd_core::propagation::{apply_filter, argmax_abs, load_power, negative_time_fraction};
use ngd_core::signal::{square_wave, truncate_at_max, GaussianPulseSpec, SampledSignal, SquareWaveSpec};
use ngd_core::FrequencyGrid;
use num_complex::Complex64;
use proptest::prelude::*;

const DT: f64 = 1e-5;

fn rc_strategy() -> impl Strategy<Value = TransferBlock> {
    (2.0f64..200.0, 10.0f64..1e4).prop_map(|(tau, r)| rc_lowpass_block(r, tau * DT / r).unwrap())
}

fn rlc_strategy() -> impl Strategy<Value = TransferBlock> {
    (0.05f64..0.5, 0.5f64..3.0, 1.0f64..1e3).prop_map(|(w0dt, q, r)| {
        let w0 = w0dt / DT;
        let l = q * r / w0;
        rlc_bandpass_block(r, l, 1.0 / (w0 * w0 * l)).unwrap()
    })
}

fn amp_strategy() -> impl Strategy<Value = TransferBlock> {
    (1.0f64..1e3, 0.002f64..0.2).prop_map(|(a, pdt)| opamp_block(OpAmpModel::new(a, pdt / DT).unwrap()).unwrap())
}

fn delay_strategy() -> impl Strategy<Value = TransferBlock> {
    (0usize..40).prop_map(|k| TransferBlock::pure_delay(k as f64 * DT).unwrap())
}

fn rc_compensator() -> impl Strategy<Value = TransferBlock> {
    (5.0f64..100.0, 10.0f64..1e3).prop_filter_map("unstable", |(tau, a)| {
        let rc = tau * DT;
        // keep the closed-loop resonance below a quarter of the Nyquist rate
        let gbw = 0.0625 * rc / (DT * DT);
        let amp = OpAmpModel::with_gain_bandwidth(a, gbw).ok()?;
        make_ngd_compensator(&CompensatorSpec::new(rc_lowpass_block(1e3, rc / 1e3).ok()?, amp)).ok()
    })
}

fn rlc_compensator() -> impl Strategy<Value = TransferBlock> {
    // closed-loop poles stay below a quarter of the Nyquist rate and the slow
    // pole decays well inside the window
    (0.05f64..0.1, 1.0f64..3.0, 10.0f64..30.0).prop_filter_map("unstable", |(w0dt, q, a)| {
        let w0 = w0dt / DT;
        let (r, l) = (100.0, q * 100.0 / w0);
        let f = rlc_bandpass_block(r, l, 1.0 / (w0 * w0 * l)).ok()?;
        let amp = OpAmpModel::new(a, 2.0 * w0).ok()?;
        make_ngd_compensator(&CompensatorSpec::new(f, amp)).ok()
    })
}

fn primitive() -> impl Strategy<Value = TransferBlock> {
    prop_oneof![
        Just(TransferBlock::Identity),
        rc_strategy(),
        rlc_strategy(),
        amp_strategy(),
        delay_strategy(),
        (-3.0f64..3.0).prop_map(|g| TransferBlock::gain(g).unwrap()),
    ]
}

/// Stable, causal blocks from the element library.
fn causal_block() -> impl Strategy<Value = TransferBlock> {
    let leaf = prop_oneof![4 => primitive(), 1 => rc_compensator(), 1 => rlc_compensator()];
    prop::collection::vec(leaf, 1..4).prop_map(TransferBlock::series)
}

fn omega() -> impl Strategy<Value = f64> {
    1e-2f64..1e6
}

fn rel_close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * b.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hermitian_symmetry(block in causal_block(), w in omega()) {
        let p = block.evaluate(w).unwrap();
        let m = block.evaluate(-w).unwrap();
        prop_assert!(rel_close(m, p.conj(), 1e-12));
    }

    #[test]
    fn feedback_matches_direct_formula(g in primitive(), f in primitive(), w in omega()) {
        let gv = g.evaluate(w).unwrap();
        let fv = f.evaluate(w).unwrap();
        let den = 1.0 + fv * gv;
        prop_assume!(den.norm() > 1e-6);
        let t = compose_feedback(g, f).evaluate(w).unwrap();
        prop_assert!(rel_close(t, gv / den, 1e-12));
    }

    #[test]
    fn primitives_are_bounded(
        r in 1.0f64..1e5, c in 1e-12f64..1e-3, l in 1e-6f64..10.0,
        a in 0.0f64..1e8, p in 1.0f64..1e8, w in omega(),
    ) {
        let rc = rc_lowpass_block(r, c).unwrap().evaluate(w).unwrap().norm();
        let rlc = rlc_bandpass_block(r, l, c).unwrap().evaluate(w).unwrap().norm();
        let amp = opamp_block(OpAmpModel::new(a, p).unwrap()).unwrap().evaluate(w).unwrap().norm();
        prop_assert!(rc <= 1.0 + 1e-15);
        prop_assert!(rlc <= 1.0 + 1e-15);
        prop_assert!(amp <= a.max(1.0) * (1.0 + 1e-15));
    }

    #[test]
    fn high_gain_drives_compensator_to_inverse(tau in 1e-4f64..1e-2, a in 1e2f64..1e6) {
        let f = rc_lowpass_block(1e3, tau / 1e3).unwrap();
        let band = FrequencyGrid::linear(0.0, 0.5 / tau, 64).unwrap();
        let inv = |gain: f64| -> f64 {
            let g = TransferBlock::gain(gain).unwrap();
            let t = compose_feedback(g, f.clone());
            band.omegas().iter().map(|&w| {
                let fv = f.evaluate(w).unwrap();
                (t.evaluate(w).unwrap() - 1.0 / fv).norm() * fv.norm()
            }).fold(0.0, f64::max)
        };
        prop_assert!(inv(2.0 * a) < inv(a));
    }

    #[test]
    fn rc_group_delay_closed_form(tau in 1e-6f64..1e-1, frac in 0.05f64..0.95) {
        let block = rc_lowpass_block(1e3, tau / 1e3).unwrap();
        let grid = FrequencyGrid::linear(0.0, 3.0 / tau, 4096).unwrap();
        let s = evaluate_grid(&block, &grid).unwrap();
        let k = ((frac * 4095.0) as usize).clamp(1, 4094);
        let w = grid.omega(k);
        let expect = tau / (1.0 + (w * tau).powi(2));
        prop_assert!((s.group_delay[k] - expect).abs() <= 1e-3 * expect);
    }

    #[test]
    fn series_phase_is_additive(a in causal_block(), b in causal_block(), w in omega()) {
        let za = a.evaluate(w).unwrap();
        let zb = b.evaluate(w).unwrap();
        let zs = TransferBlock::series([a, b]).evaluate(w).unwrap();
        prop_assume!(za.norm() > 1e-200 && zb.norm() > 1e-200);
        let d = zs.arg() - za.arg() - zb.arg();
        let wrapped = d - 2.0 * PI * (d / (2.0 * PI)).round();
        prop_assert!(wrapped.abs() < 1e-10);
    }

    #[test]
    fn golden_rule_residual_is_exact(g in primitive(), f in primitive()) {
        let grid = FrequencyGrid::logarithmic(10.0, 1e6, 50).unwrap();
        if let Ok(r) = golden_rule_residual(&g, &f, &grid) {
            let t = compose_feedback(g.clone(), f.clone());
            for (k, w) in grid.omegas().into_iter().enumerate() {
                let fg = f.evaluate(w).unwrap() * g.evaluate(w).unwrap();
                let direct = 1.0 / (1.0 + fg).norm();
                prop_assert!((r.residual[k] - direct).abs() <= 1e-12 * direct.max(1e-300));
                if fg.norm() < 1e3 {
                    let via_t = (1.0 - f.evaluate(w).unwrap() * t.evaluate(w).unwrap()).norm();
                    prop_assert!((via_t - direct).abs() <= 1e-12 * (1.0 + fg.norm()));
                }
            }
        }
    }

    #[test]
    fn square_wave_levels(
        period_samples in 10usize..200, duty in 0.05f64..0.95, low in -5.0f64..0.0, high in 0.0f64..5.0, k in 0usize..2000,
    ) {
        let spec = SquareWaveSpec { period: period_samples as f64 * DT, duty, low, high };
        let s = square_wave(&spec, 0.0, DT, 2000).unwrap();
        let phase = (s.time(k) / spec.period).rem_euclid(1.0);
        let expect = if phase < duty { high } else { low };
        prop_assert_eq!(s.samples[k], expect);
    }

    #[test]
    fn truncation_keeps_prefix(xs in prop::collection::vec(-10.0f64..10.0, 2..300)) {
        let s = SampledSignal::new(0.0, DT, xs.clone()).unwrap();
        let (t, cut) = truncate_at_max(&s);
        let k = s.index_near(cut);
        prop_assert_eq!(&t.samples[..=k], &xs[..=k]);
        prop_assert!(t.samples[k + 1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_peak_matches_voltage_peak(xs in prop::collection::vec(-10.0f64..10.0, 1..500), r in 1e-3f64..1e6) {
        let s = SampledSignal::new(0.0, DT, xs).unwrap();
        let e = load_power(&s, r).unwrap();
        prop_assert_eq!(e.peak_power_index, argmax_abs(&s));
        prop_assert!(e.power.samples.iter().all(|&p| p >= 0.0));
        prop_assert!(e.cumulative_energy.windows(2).all(|w| w[1] >= w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn impulse_responses_are_causal(block in causal_block()) {
        let h = impulse_response(&block, 1 << 14, DT).unwrap();
        let frac = negative_time_fraction(&h);
        prop_assert!(frac <= 1e-6, "negative-time energy fraction {frac:e}");
    }

    #[test]
    fn fronts_are_never_advanced(block in causal_block(), fwhm_samples in 40.0f64..400.0) {
        let n = 8192;
        let pulse = GaussianPulseSpec::new(0.35 * n as f64 * DT, fwhm_samples * DT, 1.0);
        let r = causality_front_test(&block, &pulse, 0.0, DT, n).unwrap();
        if let Some(adv) = r.front_advance {
            prop_assert!(adv <= DT * (1.0 + 1e-9), "front advanced by {adv:e}");
            prop_assert!(adv >= -(n as f64) * DT);
        }
        if let Some(dep) = r.departure_time {
            prop_assert!(dep >= r.input_cut - DT * (1.0 + 1e-9), "outputs part at {dep:e} before cut {:e}", r.input_cut);
        }
    }

    #[test]
    fn filtering_is_linear(
        block in causal_block(), a in -3.0f64..3.0, b in -3.0f64..3.0,
        xs in prop::collection::vec(-1.0f64..1.0, 64), ys in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let pad = |v: &Vec<f64>| {
            let mut out = vec![0.0; 512];
            out[100..164].copy_from_slice(v);
            SampledSignal::new(0.0, DT, out).unwrap()
        };
        let (x, y) = (pad(&xs), pad(&ys));
        let mix = x.with_samples(x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect());
        let filter = |s: &SampledSignal| ngd_core::propagation::FftFilter { wrap_tolerance: 1.0, ..Default::default() }
            .apply(&block, s)
            .unwrap()
            .signal;
        let (fx, fy, fm) = (filter(&x), filter(&y), filter(&mix));
        let rms = (fm.samples.iter().enumerate()
            .map(|(k, v)| (v - a * fx.samples[k] - b * fy.samples[k]).powi(2))
            .sum::<f64>() / 512.0).sqrt();
        let scale = (fm.samples.iter().map(|v| v * v).sum::<f64>() / 512.0).sqrt().max(1.0);
        prop_assert!(rms <= 1e-10 * scale, "rms {rms:e} at output scale {scale:e}");
    }

    #[test]
    fn identity_preserves_energy(xs in prop::collection::vec(-1.0f64..1.0, 16..400)) {
        let s = SampledSignal::new(0.0, DT, xs).unwrap();
        let y = apply_filter(&TransferBlock::Identity, &s).unwrap();
        prop_assert!((y.energy() - s.energy()).abs() <= 1e-12 * s.energy().max(1e-300));
    }
}

#[test]
fn rc_impulse_response_matches_exponential() {
    let tau = 50.0 * DT;
    let block = TransferBlock::Primitive(Element::RcLowPass(ngd_core::circuit::RcLowPass::new(1e3, tau / 1e3).unwrap()));
    let h = impulse_response(&block, 4096, DT).unwrap();
    let mut err = 0.0;
    let mut norm = 0.0;
    for k in 0..1024 {
        let t = k as f64 * DT;
        let exact = if k == 0 { 0.5 / tau } else { (-t / tau).exp() / tau };
        err += (h.samples[k] - exact).powi(2);
        norm += exact * exact;
    }
    assert!((err / norm).sqrt() < 1e-3);
    assert!(negative_time_fraction(&h) < 1e-6);
}
