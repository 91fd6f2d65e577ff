//! Central finite differences against every hand-written backward pass.

use supcon_core::loss::{cross_entropy, cross_entropy_with_grad, supcon_loss_unchecked, LossConfig, LossVariant};
use supcon_core::model::{
    ClassifierConfig, EncoderConfig, LinearClassifier, Parameterized, ProjectionConfig, ProjectionHead, VitEncoder,
};
use supcon_core::rng;
use supcon_core::{ClassLabel, Matrix, PatchImage};

fn random_matrix(n: usize, d: usize, rng: &mut rng::Rng) -> Matrix {
    Matrix::new(n, d, (0..n * d).map(|_| rng::normal(rng)).collect()).unwrap()
}

fn random_labels(n: usize, rng: &mut rng::Rng) -> Vec<ClassLabel> {
    (0..n).map(|_| if rng::bernoulli(rng, 0.5) { ClassLabel::Malignant } else { ClassLabel::Benign }).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error of the whole vector.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-300)
}

/// Central differences of `f` at `x`.
fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn weighted_sum(m: &Matrix, c: &Matrix) -> f64 {
    m.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
}

#[test]
fn supcon_gradient_both_variants() {
    let mut r = rng::seeded(11);
    for case in 0..20 {
        let n = 4 + case % 6 * 2;
        let d = 2 + case % 5;
        let z = supcon_core::normalize_rows(&random_matrix(n, d, &mut r)).unwrap();
        // Both classes with at least two rows each; a single-class batch has
        // a constant loss under the as-printed form.
        let mut labels = random_labels(n, &mut r);
        labels[..2].fill(ClassLabel::Benign);
        labels[n - 2..].fill(ClassLabel::Malignant);
        for variant in [LossVariant::AsPrinted, LossVariant::KhoslaOut] {
            let cfg = LossConfig::new([0.1, 0.5, 1.0][case % 3], variant);
            let analytic = supcon_loss_unchecked(&z, &labels, &cfg).unwrap().grad;
            let numeric = numeric_grad(z.as_slice(), 1e-6, |x| {
                supcon_loss_unchecked(&Matrix::new(n, d, x.to_vec()).unwrap(), &labels, &cfg).unwrap().loss
            });
            let e = rel_err(analytic.as_slice(), &numeric);
            assert!(e <= 1e-5, "case {case} {variant:?}: rel err {e:e}");
        }
    }
}

#[test]
fn cross_entropy_gradient() {
    let mut r = rng::seeded(12);
    for case in 0..20 {
        let n = 1 + case % 9;
        let logits = random_matrix(n, 2, &mut r);
        let labels = random_labels(n, &mut r);
        let (_, analytic) = cross_entropy_with_grad(&logits, &labels).unwrap();
        let numeric =
            numeric_grad(logits.as_slice(), 1e-6, |x| cross_entropy(&Matrix::new(n, 2, x.to_vec()).unwrap(), &labels).unwrap());
        let e = rel_err(analytic.as_slice(), &numeric);
        assert!(e <= 1e-5, "case {case}: rel err {e:e}");
    }
}

#[test]
fn projection_head_gradients() {
    let mut r = rng::seeded(13);
    for case in 0..20 {
        let (n, d_in, d_out) = (1 + case % 4, 3 + case % 3, 2 + case % 4);
        let head = ProjectionHead::new(ProjectionConfig { in_dim: d_in, out_dim: d_out }, case as u64).unwrap();
        let input = random_matrix(n, d_in, &mut r);
        let c = random_matrix(n, d_out, &mut r);
        let (z, trace) = head.forward_train(&input).unwrap();
        let (dw, dr) = head.backward(&trace, &c).unwrap();
        let _ = z;

        let numeric_w = numeric_grad(head.params().data(), 1e-5, |w| {
            let mut h = head.clone();
            h.params_mut().data_mut().copy_from_slice(w);
            weighted_sum(&h.project(&input).unwrap(), &c)
        });
        let numeric_r = numeric_grad(input.as_slice(), 1e-5, |x| {
            weighted_sum(&head.project(&Matrix::new(n, d_in, x.to_vec()).unwrap()).unwrap(), &c)
        });
        assert!(rel_err(&dw, &numeric_w) <= 1e-3, "case {case}: weights");
        assert!(rel_err(dr.as_slice(), &numeric_r) <= 1e-3, "case {case}: inputs");
    }
}

#[test]
fn classifier_head_gradients() {
    let mut r = rng::seeded(14);
    for case in 0..20 {
        let (n, d) = (1 + case % 5, 2 + case % 6);
        let clf = LinearClassifier::new(ClassifierConfig::new(d), case as u64).unwrap();
        let input = random_matrix(n, d, &mut r);
        let labels = random_labels(n, &mut r);
        let (_, dlogits) = cross_entropy_with_grad(&clf.logits(&input).unwrap(), &labels).unwrap();
        let (grads, dr) = clf.backward(&input, &dlogits).unwrap();
        let numeric_p = numeric_grad(clf.params().data(), 1e-5, |p| {
            let mut c = clf.clone();
            c.params_mut().data_mut().copy_from_slice(p);
            cross_entropy(&c.logits(&input).unwrap(), &labels).unwrap()
        });
        let numeric_r = numeric_grad(input.as_slice(), 1e-5, |x| {
            cross_entropy(&clf.logits(&Matrix::new(n, d, x.to_vec()).unwrap()).unwrap(), &labels).unwrap()
        });
        assert!(rel_err(&grads, &numeric_p) <= 1e-3, "case {case}: params");
        assert!(rel_err(dr.as_slice(), &numeric_r) <= 1e-3, "case {case}: inputs");
    }
}

fn tiny_vit_config() -> EncoderConfig {
    EncoderConfig { input_size: 16, patch_size: 8, depth: 1, width: 8, heads: 2, mlp_ratio: 4 }
}

fn random_image(size: usize, rng: &mut rng::Rng) -> PatchImage {
    PatchImage::from_fn(size, size, |_, _, _| rng::uniform(rng) as f32)
}

#[test]
fn depth_one_vit_gradients() {
    let cfg = tiny_vit_config();
    let mut r = rng::seeded(15);
    for case in 0..20 {
        let mut enc = VitEncoder::new(cfg, case as u64).unwrap();
        // Move LayerNorm gains and biases off their initial values so every
        // path carries gradient.
        for v in enc.params_mut().data_mut() {
            *v += 0.05 * rng::normal(&mut r);
        }
        let batch = 1 + case % 3;
        let images: Vec<PatchImage> = (0..batch).map(|_| random_image(16, &mut r)).collect();
        let patches = enc.patchify(&images);
        let c = random_matrix(batch, cfg.width, &mut r);
        let (_, trace) = enc.forward_train(&patches).unwrap();
        let analytic = enc.backward(&trace, &c).unwrap();
        let numeric = numeric_grad(enc.params().data(), 1e-5, |p| {
            let mut e = enc.clone();
            e.params_mut().data_mut().copy_from_slice(p);
            weighted_sum(&e.forward(&patches).unwrap(), &c)
        });
        let e = rel_err(&analytic, &numeric);
        assert!(e <= 1e-3, "case {case}: rel err {e:e}");
    }
}

#[test]
fn vit_gradient_reaches_every_tensor() {
    let cfg = tiny_vit_config();
    let mut r = rng::seeded(16);
    let enc = VitEncoder::new(cfg, 3).unwrap();
    let images: Vec<PatchImage> = (0..2).map(|_| random_image(16, &mut r)).collect();
    let (_, trace) = enc.forward_train(&enc.patchify(&images)).unwrap();
    let g = enc.backward(&trace, &random_matrix(2, cfg.width, &mut r)).unwrap();
    for spec in enc.params().specs() {
        assert!(g[spec.range()].iter().any(|v| *v != 0.0), "{} receives no gradient", spec.name);
    }
}
