mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srnav::kinematics::Jacobian2x2;
use srnav::scene::{degrade, render_disk, DegradationParams, GroundTruthCircle};
use srnav::sr::{
    back_project, forward_project, generate_offsets, gradient, objective, reconstruct_sr, Sampling,
    ShiftSet, SrOptions, StopReason,
};
use srnav::Image;

use common::{bordered_truth, interleaved_frame, random_image};

fn options(blur: f64, sampling: Sampling) -> SrOptions {
    SrOptions {
        blur_sigma: blur,
        sampling,
        ..SrOptions::default()
    }
}

#[test]
fn half_pixel_frames_reconstruct_the_interleaving() {
    let truth = bordered_truth(32, 11);
    let parity = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let frames: Vec<Image> = parity
        .iter()
        .map(|&(a, b)| interleaved_frame(&truth, a, b))
        .collect();
    let shifts =
        ShiftSet::from_offsets(vec![[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]).unwrap();
    let opts = SrOptions {
        blur_sigma: 0.0,
        sampling: Sampling::Point,
        mse_stop_fraction: 1e-12,
        ..SrOptions::default()
    };
    // the forward model agrees with the hand-built sampling pattern
    for (frame, &offset) in frames.iter().zip(shifts.offsets()) {
        let sim = forward_project(&truth, offset, &opts).unwrap();
        assert!(sim.mse(frame).unwrap() < 1e-24);
    }
    let result = reconstruct_sr(&frames, &shifts, &opts).unwrap();
    assert!(result.iterations_used <= 100);
    assert!(result.image.mse(&truth).unwrap() <= 1e-6);
}

#[test]
fn noiseless_disk_frames_are_reproduced() {
    let hi = render_disk(GroundTruthCircle::new(16.3, 15.8, 5.0), (32, 32), 8).unwrap();
    let shifts = generate_offsets(4, 5, &Jacobian2x2::identity()).unwrap();
    let params = DegradationParams::default().noiseless();
    let frames: Vec<Image> = shifts
        .offsets()
        .iter()
        .map(|&s| degrade(&hi, &params, s).unwrap())
        .collect();
    let result = reconstruct_sr(&frames, &shifts, &SrOptions::default()).unwrap();
    let last = *result.residual_history.last().unwrap();
    assert!(
        last < 0.05 * result.residual_history[0],
        "{:?}",
        result.residual_history
    );
}

#[test]
fn reconstruction_is_deterministic() {
    let frames: Vec<Image> = (0..4).map(|k| random_image(12, 12, k)).collect();
    let shifts = generate_offsets(4, 9, &Jacobian2x2::identity()).unwrap();
    let a = reconstruct_sr(&frames, &shifts, &SrOptions::default()).unwrap();
    let b = reconstruct_sr(&frames, &shifts, &SrOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identity_problem_returns_the_frame() {
    let frame = random_image(10, 7, 3);
    let shifts = ShiftSet::from_offsets(vec![[0.0, 0.0]]).unwrap();
    let opts = SrOptions {
        upscale_factor: 1,
        blur_sigma: 0.0,
        ..SrOptions::default()
    };
    let result = reconstruct_sr(std::slice::from_ref(&frame), &shifts, &opts).unwrap();
    assert!(result.image.mse(&frame).unwrap() < 1e-18);
    assert_eq!(result.stop_reason, StopReason::ExactStart);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn back_projection_is_the_adjoint(
        seed in any::<u64>(),
        dx in -1.0f64..1.0,
        dy in -1.0f64..1.0,
        blur in 0.0f64..1.5,
        point in any::<bool>(),
        f in 1usize..4,
    ) {
        let opts = SrOptions {
            upscale_factor: f,
            ..options(blur, if point { Sampling::Point } else { Sampling::Area })
        };
        let x = random_image(6 * f, 5 * f, seed);
        let y = random_image(6, 5, seed ^ 0x55);
        let lhs = forward_project(&x, [dx, dy], &opts).unwrap().dot(&y);
        let rhs = x.dot(&back_project(&y, [dx, dy], &opts));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), blur in 0.0f64..1.0) {
        let opts = options(blur, Sampling::Area);
        let frames: Vec<Image> = (0..4).map(|k| random_image(4, 4, seed.wrapping_add(k))).collect();
        let shifts = generate_offsets(4, seed, &Jacobian2x2::identity()).unwrap();
        let x = random_image(8, 8, seed ^ 0xabc);
        let g = gradient(&x, &frames, &shifts, &opts).unwrap();
        let h = 1e-5;
        let mut num = Vec::with_capacity(64);
        for i in 0..64 {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let d = objective(&plus, &frames, &shifts, &opts).unwrap() - objective(&minus, &frames, &shifts, &opts).unwrap();
            num.push(d / (2.0 * h));
        }
        let diff: f64 = num.iter().zip(g.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = g.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-5 * norm, "relative error {}", diff / norm);
    }

    #[test]
    fn residual_history_never_increases(
        seed in any::<u64>(),
        noise in 0.0f64..0.1,
        blur in 0.0f64..1.0,
        r in 3.0f64..6.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = [rng.random_range(14.0..18.0), rng.random_range(14.0..18.0)];
        let hi = render_disk(GroundTruthCircle::new(c[0], c[1], r), (32, 32), 4).unwrap();
        let shifts = generate_offsets(4, seed, &Jacobian2x2::identity()).unwrap();
        let params = DegradationParams { blur_sigma: blur, noise_sigma: noise, ..DegradationParams::default() };
        let frames: Vec<Image> = shifts
            .offsets()
            .iter()
            .enumerate()
            .map(|(k, &s)| degrade(&hi, &params.with_seed(seed.wrapping_add(k as u64)), s).unwrap())
            .collect();
        let result = reconstruct_sr(&frames, &shifts, &options(blur, Sampling::Area)).unwrap();
        prop_assert!(result.residual_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(result.residual_history.len(), result.iterations_used + 1);
        prop_assert!(result.iterations_used <= 100);
    }
}
