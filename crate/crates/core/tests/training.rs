use harmnet_core::data::{
    build_vocab, encode, gen_synthetic, EncodedReport, LabelSchema, Profile, SynthSpec, TokenIds,
};
use harmnet_core::model::{argmax, HarmClassifier, ModelConfig, Variant};
use harmnet_core::training::{train, train_step, AdamState, Monitor, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn separable(n: usize, seed: u64, n_max: usize) -> (Vec<EncodedReport>, usize) {
    let reports = gen_synthetic(&SynthSpec::profile(Profile::Separable), n, seed).unwrap();
    let vocab = build_vocab(reports.iter().map(|r| r.text.as_str()), 1).unwrap();
    let schema = LabelSchema::binary();
    let enc = reports
        .iter()
        .map(|r| encode(r, &vocab, &schema, n_max).unwrap())
        .collect();
    (enc, vocab.size())
}

fn small_model(vocab: usize, n_max: usize, seed: u64) -> HarmClassifier {
    let cfg = ModelConfig {
        embed_dim: 16,
        channels: 8,
        hidden_size: 16,
        n_max,
        seed,
        ..ModelConfig::new(Variant::AttGruCnn, vocab, 2)
    };
    HarmClassifier::build(cfg).unwrap()
}

fn accuracy(model: &HarmClassifier, data: &[EncodedReport]) -> f64 {
    let tokens: Vec<&TokenIds> = data.iter().map(|r| &r.tokens).collect();
    let probs = model.forward(&tokens).unwrap();
    let hits = data
        .iter()
        .enumerate()
        .filter(|(i, r)| argmax(probs.row(*i)) == r.label)
        .count();
    hits as f64 / data.len() as f64
}

#[test]
fn attentive_model_memorizes_twenty_reports() {
    let (data, vocab) = separable(20, 11, 32);
    assert!(data.iter().any(|r| r.label == 0) && data.iter().any(|r| r.label == 1));
    let mut model = small_model(vocab, 32, 5);
    model.set_training(true);
    let cfg = TrainConfig {
        batch_size: 20,
        ..TrainConfig::default()
    };
    let mut state = AdamState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch: Vec<&EncodedReport> = data.iter().collect();
    let mut reached = None;
    for epoch in 1..=200 {
        train_step(&mut model, &batch, &mut state, &cfg, &mut rng).unwrap();
        model.set_training(false);
        if accuracy(&model, &data) == 1.0 {
            reached = Some(epoch);
            break;
        }
        model.set_training(true);
    }
    assert!(reached.is_some(), "training accuracy never reached 100%");
}

#[test]
fn full_batch_loss_mostly_decreases() {
    let (data, vocab) = separable(40, 12, 32);
    let mut model = small_model(vocab, 32, 6);
    let cfg = TrainConfig {
        batch_size: 40,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let mut state = AdamState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch: Vec<&EncodedReport> = data.iter().collect();
    // dropout stays off: the model is left in inference mode
    let losses: Vec<f64> = (0..51)
        .map(|_| train_step(&mut model, &batch, &mut state, &cfg, &mut rng).unwrap())
        .collect();
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 5, "{rises} increases in {losses:?}");
    assert!(losses[50] < losses[0]);
}

#[test]
fn zero_patience_stops_at_first_non_improvement() {
    let (data, vocab) = separable(60, 13, 32);
    let (tr, va) = data.split_at(40);
    let cfg = TrainConfig {
        batch_size: 8,
        max_epochs: 30,
        early_stop_patience: 0,
        monitor: Monitor::Loss,
        ..TrainConfig::default()
    };
    let (_, history) = train(small_model(vocab, 32, 7), tr, va, &cfg).unwrap();
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.valid_loss).collect();
    if history.stopped_early {
        let last = losses.len() - 1;
        let best_before = losses[..last].iter().copied().fold(f64::INFINITY, f64::min);
        assert!(losses[last] >= best_before, "{losses:?}");
        assert!(losses[..last].windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    } else {
        assert_eq!(losses.len(), 30);
    }
    let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(losses[history.best_epoch], best);
}

#[test]
fn training_is_deterministic() {
    let (data, vocab) = separable(50, 14, 24);
    let (tr, va) = data.split_at(35);
    let cfg = TrainConfig {
        batch_size: 10,
        max_epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || train(small_model(vocab, 24, 8), tr, va, &cfg).unwrap();
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha, hb);
    assert_eq!(a.params(), b.params());
}
