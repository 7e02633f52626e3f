use otvq::data::gen_gaussian_mixture;
use otvq::diffcore::{grad_check, Tape, Tensor};
use otvq::models::{
    evaluate, vqvae_loss, vqvae_loss_on_tape, vqwae_loss, vqwae_loss_on_tape, CodebookInit,
    EncoderDecoder, LossWeights, Method, Mlp, Model, ModelConfig, ParamGroup, TrainSettings,
    TrainState,
};
use otvq::ot::DualPotentials;
use otvq::vq::Codebook;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// n_x = 2, n_z = 1, M = 1, K = 2, single linear layer each way.
fn tiny_model() -> Model {
    let enc = Mlp::from_layers(vec![t(&[2, 1], &[0.5, -1.0])], vec![t(&[1], &[0.2])]).unwrap();
    let dec = Mlp::from_layers(vec![t(&[1, 2], &[1.5, -0.5])], vec![t(&[2], &[0.1, 0.3])]).unwrap();
    let net = EncoderDecoder::new(enc, dec, 1, 1).unwrap();
    let cb = Codebook::new(t(&[2, 1], &[-0.4, 0.9]), t(&[1, 2], &[0.3, -0.2])).unwrap();
    Model::new(net, cb).unwrap()
}

fn tiny_batch() -> Tensor {
    t(&[3, 2], &[1.0, 0.2, -0.5, 0.4, 0.3, -1.1])
}

/// Plain arithmetic evaluation of the tiny model: (z, q, x̂) per sample.
fn tiny_by_hand(x: &[[f64; 2]]) -> Vec<(f64, f64, [f64; 2])> {
    let atoms = [-0.4, 0.9];
    x.iter()
        .map(|s| {
            let z = 0.5 * s[0] - 1.0 * s[1] + 0.2;
            let q = if (z - atoms[0]).powi(2) <= (z - atoms[1]).powi(2) {
                atoms[0]
            } else {
                atoms[1]
            };
            (z, q, [1.5 * q + 0.1, -0.5 * q + 0.3])
        })
        .collect()
}

const TINY_X: [[f64; 2]; 3] = [[1.0, 0.2], [-0.5, 0.4], [0.3, -1.1]];

#[test]
fn encode_shape_and_zero_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = EncoderDecoder::init(5, &[7, 6], 3, 4, &mut rng);
    let z = net.encode(&Tensor::zeros(&[1, 5])).unwrap();
    assert_eq!(z.shape(), &[1, 3, 4]);
    assert_eq!(net.decode(&z).unwrap().shape(), &[1, 5]);

    let mut zero = net.clone();
    for p in zero.encoder.params_mut() {
        p.data_mut().fill(0.0);
    }
    let x = Tensor::full(&[2, 5], 0.7);
    assert!(zero.encode(&x).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn two_layer_encoder_matches_hand_evaluation() {
    let w1 = [[0.2, -0.3, 0.5], [0.7, 0.1, -0.4]];
    let b1 = [0.05, -0.2, 0.1];
    let w2 = [[1.0, -0.5], [0.3, 0.8], [-0.6, 0.2]];
    let b2 = [0.0, 0.25];
    let enc = Mlp::from_layers(
        vec![t(&[2, 3], &w1.concat()), t(&[3, 2], &w2.concat())],
        vec![t(&[3], &b1), t(&[2], &b2)],
    )
    .unwrap();
    let dec = Mlp::from_layers(
        vec![t(&[2, 2], &[1.0, 0.0, 0.0, 1.0])],
        vec![t(&[2], &[0.0; 2])],
    )
    .unwrap();
    let net = EncoderDecoder::new(enc, dec, 1, 2).unwrap();
    let x = [0.9, -1.3];
    let mut h = [0.0; 3];
    for j in 0..3 {
        h[j] = (x[0] * w1[0][j] + x[1] * w1[1][j] + b1[j]).max(0.0);
    }
    let mut out = [0.0; 2];
    for j in 0..2 {
        out[j] = h[0] * w2[0][j] + h[1] * w2[1][j] + h[2] * w2[2][j] + b2[j];
    }
    let z = net.encode(&t(&[1, 2], &x)).unwrap();
    for j in 0..2 {
        assert!((z.data()[j] - out[j]).abs() < 1e-15);
    }
    // Identity decoder returns its input.
    assert_eq!(net.decode(&z).unwrap().data(), z.data());
}

#[test]
fn vqvae_loss_matches_hand_evaluation() {
    let model = tiny_model();
    let w = LossWeights::default();
    let l = vqvae_loss(&model, &tiny_batch(), &w).unwrap();
    let rows = tiny_by_hand(&TINY_X);
    let n = rows.len() as f64;
    let mut recon = 0.0;
    let mut dist = 0.0;
    for ((z, q, xh), x) in rows.iter().zip(TINY_X) {
        recon += (xh[0] - x[0]).powi(2) + (xh[1] - x[1]).powi(2);
        dist += (z - q).powi(2);
    }
    recon /= 2.0 * n;
    dist /= n;
    assert!((l.recon - recon).abs() < 1e-14);
    assert!((l.vqvae_codebook - dist).abs() < 1e-14);
    assert!((l.vqvae_commit - dist).abs() < 1e-14);
    assert!((l.total - (recon + dist + 0.25 * dist)).abs() < 1e-14);
    assert_eq!((l.ws_term, l.kl_term), (0.0, 0.0));
}

#[test]
fn vqvae_beta_zero_ignores_commitment() {
    let model = tiny_model();
    let w = LossWeights {
        beta_commit: 0.0,
        ..LossWeights::default()
    };
    let l = vqvae_loss(&model, &tiny_batch(), &w).unwrap();
    assert_eq!(l.total, l.recon + l.vqvae_codebook);
}

#[test]
fn perfect_autoencoder_has_zero_losses() {
    // Encoder picks the first coordinate; codewords cover every first coordinate; decoder
    // writes it back to both coordinates; data lies on the diagonal.
    let enc = Mlp::from_layers(vec![t(&[2, 1], &[1.0, 0.0])], vec![t(&[1], &[0.0])]).unwrap();
    let dec = Mlp::from_layers(vec![t(&[1, 2], &[1.0, 1.0])], vec![t(&[2], &[0.0, 0.0])]).unwrap();
    let net = EncoderDecoder::new(enc, dec, 1, 1).unwrap();
    let model = Model::new(
        net,
        Codebook::new(t(&[2, 1], &[-1.0, 2.0]), Tensor::zeros(&[1, 2])).unwrap(),
    )
    .unwrap();
    let x = t(&[2, 2], &[-1.0, -1.0, 2.0, 2.0]);
    let l = vqvae_loss(&model, &x, &LossWeights::default()).unwrap();
    assert_eq!(l.total, 0.0);
    let l = vqwae_loss(
        &model,
        &x,
        &DualPotentials::zeros(1, 2),
        &LossWeights::default(),
    )
    .unwrap();
    assert_eq!(l.recon, 0.0);
    assert_eq!(l.kl_term, 0.0);
}

#[test]
fn vqwae_weights_zero_gives_recon() {
    let model = tiny_model();
    let w = LossWeights {
        lambda: 0.0,
        lambda_r: 0.0,
        ..LossWeights::default()
    };
    let phis = DualPotentials::from_tensor(t(&[1, 2], &[0.3, -0.1])).unwrap();
    let l = vqwae_loss(&model, &tiny_batch(), &phis, &w).unwrap();
    assert_eq!(l.total, l.recon);
}

#[test]
fn vqwae_uniform_logits_have_zero_kl() {
    let mut model = tiny_model();
    model.codebook.beta = Tensor::full(&[1, 2], 0.4);
    let l = vqwae_loss(
        &model,
        &tiny_batch(),
        &DualPotentials::zeros(1, 2),
        &LossWeights::default(),
    )
    .unwrap();
    assert!(l.kl_term.abs() < 1e-15);
}

#[test]
fn vqwae_single_codeword_closed_form() {
    // With K = 1 the semi-dual is the mean squared distance to the codeword, whatever φ is.
    let enc = Mlp::from_layers(
        vec![t(&[2, 2], &[0.5, -1.0, 0.3, 0.8])],
        vec![t(&[2], &[0.2, 0.0])],
    )
    .unwrap();
    let dec = Mlp::from_layers(
        vec![t(&[2, 2], &[1.0, 0.5, -0.5, 1.0])],
        vec![t(&[2], &[0.1, 0.3])],
    )
    .unwrap();
    let net = EncoderDecoder::new(enc, dec, 2, 1).unwrap();
    let c = 0.35;
    let model = Model::new(
        net,
        Codebook::new(t(&[1, 1], &[c]), Tensor::zeros(&[2, 1])).unwrap(),
    )
    .unwrap();
    let w = LossWeights {
        lambda: 0.5,
        ..LossWeights::default()
    };
    let phis = DualPotentials::from_tensor(t(&[2, 1], &[1.7, -0.4])).unwrap();
    let l = vqwae_loss(&model, &tiny_batch(), &phis, &w).unwrap();

    let mut ws = 0.0;
    let mut recon = 0.0;
    for x in TINY_X {
        let z = [0.5 * x[0] + 0.3 * x[1] + 0.2, -x[0] + 0.8 * x[1]];
        ws += (z[0] - c).powi(2) + (z[1] - c).powi(2);
        let xh = [c * 1.0 + c * -0.5 + 0.1, c * 0.5 + c * 1.0 + 0.3];
        recon += (xh[0] - x[0]).powi(2) + (xh[1] - x[1]).powi(2);
    }
    ws /= 2.0 * 3.0;
    recon /= 6.0;
    assert!((l.ws_term - ws).abs() < 1e-12, "{} vs {ws}", l.ws_term);
    assert!((l.recon - recon).abs() < 1e-14);
    assert_eq!(l.kl_term, 0.0);
    assert!((l.total - (recon + 0.5 * ws)).abs() < 1e-12);
}

fn small_model(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = EncoderDecoder::init(3, &[4], 2, 2, &mut rng);
    let mut cb = Codebook::init_uniform(3, 2, 2, &mut rng);
    // Spread the atoms so no latent sits near a quantization boundary.
    cb.atoms = t(&[3, 2], &[-1.5, 0.4, 0.2, -1.2, 1.3, 1.1]);
    cb.beta = t(&[2, 3], &[0.2, -0.3, 0.1, 0.0, 0.5, -0.2]);
    Model::new(net, cb).unwrap()
}

fn small_batch() -> Tensor {
    t(
        &[4, 3],
        &[
            0.9, -0.3, 0.5, -0.7, 0.2, 1.1, 0.4, 0.8, -0.6, -1.0, -0.5, 0.3,
        ],
    )
}

fn check_all_params(method: Method) -> Vec<(ParamGroup, f64)> {
    let model = small_model(5);
    let x = small_batch();
    let w = LossWeights {
        lambda: 0.3,
        ..LossWeights::default()
    };
    let phis = DualPotentials::from_tensor(t(&[2, 3], &[0.1, -0.2, 0.05, 0.3, 0.0, -0.1])).unwrap();
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let groups = model.param_groups();
    (0..params.len())
        .map(|j| {
            let f = |tape: &mut Tape, var| {
                let ids: Vec<_> = params
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        if i == j {
                            Ok(var)
                        } else {
                            tape.constant(p.clone())
                        }
                    })
                    .collect::<otvq::Result<_>>()?;
                let p = model.split_ids(&ids);
                let xn = tape.constant(x.clone())?;
                let nodes = match method {
                    Method::Vqvae => vqvae_loss_on_tape(tape, &p, xn, &w)?,
                    Method::Vqwae => vqwae_loss_on_tape(tape, &p, xn, &phis, &w)?,
                };
                Ok(nodes.total)
            };
            (groups[j], grad_check(f, &params[j], 1e-6).unwrap())
        })
        .collect()
}

#[test]
fn vqwae_gradients_pass_grad_check() {
    let res = check_all_params(Method::Vqwae);
    for g in [
        ParamGroup::Encoder,
        ParamGroup::Decoder,
        ParamGroup::Atoms,
        ParamGroup::Logits,
    ] {
        assert!(res.iter().any(|(pg, _)| *pg == g));
    }
    for (g, err) in res {
        assert!(err < 1e-4, "{g:?}: {err}");
    }
}

#[test]
fn vqvae_gradients_pass_grad_check() {
    for (g, err) in check_all_params(Method::Vqvae) {
        assert!(err < 1e-4, "{g:?}: {err}");
    }
}

fn atom_gradient(lambda: f64) -> Tensor {
    let model = small_model(2);
    let w = LossWeights {
        lambda,
        ..LossWeights::default()
    };
    let mut tape = Tape::new();
    let p = model.leaves(&mut tape).unwrap();
    let xn = tape.constant(small_batch()).unwrap();
    let nodes = vqwae_loss_on_tape(&mut tape, &p, xn, &DualPotentials::zeros(2, 3), &w).unwrap();
    tape.backward(nodes.total)
        .unwrap()
        .get(p.atoms)
        .unwrap()
        .clone()
}

#[test]
fn atoms_learn_only_through_ws_term() {
    assert!(atom_gradient(0.0).data().iter().all(|&g| g == 0.0));
    assert!(atom_gradient(0.1).data().iter().any(|&g| g != 0.0));
}

fn synthetic_state(method: Method, lr: f64, phi_iters: usize) -> (TrainState, otvq::data::Dataset) {
    let ds = gen_gaussian_mixture(4, 2, 40, 0.05, 3).unwrap();
    let cfg = ModelConfig {
        hidden: vec![16],
        components: 1,
        latent_dim: 2,
        codebook_size: 6,
        codebook_init: CodebookInit::Uniform,
    };
    let settings = TrainSettings {
        method,
        batch_size: 16,
        lr,
        phi_lr: 1e-2,
        phi_iters,
        weights: LossWeights::default(),
    };
    (TrainState::new(&cfg, settings, &ds, 11).unwrap(), ds)
}

#[test]
fn potentials_untouched_by_descent_and_networks_by_ascent() {
    let (mut s, ds) = synthetic_state(Method::Vqwae, 1e-3, 0);
    let phis = s.phis.clone();
    s.step(&ds).unwrap();
    assert_eq!(s.phis, phis);

    let (mut s, ds) = synthetic_state(Method::Vqwae, 0.0, 5);
    let model = s.model.clone();
    s.step(&ds).unwrap();
    assert_eq!(s.model, model);
    assert_ne!(s.phis, phis);
}

#[test]
fn zero_learning_rate_repeats_loss() {
    let (mut s, _) = synthetic_state(Method::Vqvae, 0.0, 0);
    let x = small_batch_2d();
    let a = s.train_step(&x).unwrap();
    let b = s.train_step(&x).unwrap();
    assert_eq!(a, b);
    assert_eq!(s.iteration, 2);
}

fn small_batch_2d() -> Tensor {
    t(
        &[16, 2],
        &(0..32).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
    )
}

#[test]
fn identical_seeds_evolve_identically() {
    for method in [Method::Vqvae, Method::Vqwae] {
        let (mut a, ds) = synthetic_state(method, 1e-3, 5);
        let (mut b, _) = synthetic_state(method, 1e-3, 5);
        for _ in 0..20 {
            assert_eq!(a.step(&ds).unwrap(), b.step(&ds).unwrap());
        }
        assert_eq!(a, b);
    }
}

#[test]
fn checkpoint_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let (mut s, ds) = synthetic_state(Method::Vqwae, 1e-3, 5);
    for _ in 0..7 {
        s.step(&ds).unwrap();
    }
    s.save(&path).unwrap();
    let mut loaded = TrainState::load(&path).unwrap();
    assert_eq!(loaded, s);
    for _ in 0..5 {
        assert_eq!(loaded.step(&ds).unwrap(), s.step(&ds).unwrap());
    }
    assert_eq!(loaded, s);
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    std::fs::write(&path, r#"{"format":"otvq-checkpoint","version":99}"#).unwrap();
    let err = TrainState::load(&path).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn evaluate_exact_reconstruction_reports_infinite_psnr() {
    let enc = Mlp::from_layers(vec![t(&[2, 1], &[1.0, 0.0])], vec![t(&[1], &[0.0])]).unwrap();
    let dec = Mlp::from_layers(vec![t(&[1, 2], &[1.0, 1.0])], vec![t(&[2], &[0.0, 0.0])]).unwrap();
    let net = EncoderDecoder::new(enc, dec, 1, 1).unwrap();
    let model = Model::new(
        net,
        Codebook::new(t(&[2, 1], &[-1.0, 2.0]), Tensor::zeros(&[1, 2])).unwrap(),
    )
    .unwrap();
    let samples = t(&[3, 2], &[-1.0, -1.0, 2.0, 2.0, 2.0, 2.0]);
    let ds = otvq::data::Dataset::new(
        samples,
        None,
        otvq::data::DatasetMeta {
            name: "diag".into(),
            n_x: 2,
            peak: 3.0,
            seed: None,
            image_dims: None,
        },
    )
    .unwrap();
    let m = evaluate(&model, &ds).unwrap();
    assert_eq!(m.mse, 0.0);
    assert_eq!(m.psnr, f64::INFINITY);
    assert_eq!(m.usage.counts, vec![vec![1, 2]]);
}

#[test]
fn evaluation_is_reproducible_and_bounded() {
    let (mut s, ds) = synthetic_state(Method::Vqwae, 1e-3, 5);
    for _ in 0..30 {
        s.step(&ds).unwrap();
    }
    let a = evaluate(&s.model, &ds).unwrap();
    let b = evaluate(&s.model.clone(), &ds).unwrap();
    assert_eq!(a, b);
    for p in &a.usage.perplexity {
        assert!(*p >= 1.0 - 1e-12 && *p <= 6.0 + 1e-9);
    }
    let expected_psnr = 10.0 * (ds.meta().peak.powi(2) / a.mse).log10();
    assert!((a.psnr - expected_psnr).abs() < 1e-12);
}

/// Pilot runs of this fixture gave last/first ratios of 0.20 (VQ-VAE) and 0.58 (VQ-WAE).
const MAX_RECON_RATIO: f64 = 0.75;

#[test]
fn training_reduces_reconstruction() {
    // Smoothed over 20-step windows.
    for method in [Method::Vqvae, Method::Vqwae] {
        let ds = gen_gaussian_mixture(8, 2, 100, 0.05, 0).unwrap();
        let cfg = ModelConfig {
            hidden: vec![64, 64],
            components: 1,
            latent_dim: 2,
            codebook_size: 16,
            codebook_init: CodebookInit::Uniform,
        };
        let settings = TrainSettings {
            method,
            batch_size: 32,
            lr: 1e-3,
            phi_lr: 1e-2,
            phi_iters: 5,
            weights: LossWeights::default(),
        };
        let mut s = TrainState::new(&cfg, settings, &ds, 0).unwrap();
        let recon: Vec<f64> = (0..200).map(|_| s.step(&ds).unwrap().recon).collect();
        let first: f64 = recon[..20].iter().sum::<f64>() / 20.0;
        let last: f64 = recon[180..].iter().sum::<f64>() / 20.0;
        assert!(
            last < MAX_RECON_RATIO * first,
            "{method:?}: {first} -> {last}"
        );
    }
}
