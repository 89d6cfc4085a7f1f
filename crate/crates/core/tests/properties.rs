use harmnet_core::autodiff::{ParamStore, Tape, Tensor};
use harmnet_core::data::{build_vocab, encode_text, TokenIds};
use harmnet_core::layers::{attention_pool, AttentionParams};
use harmnet_core::model::{HarmClassifier, ModelConfig, Variant};
use harmnet_core::training::{split_indices, SplitRatios};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, batch: usize, seq: usize) -> Vec<bool> {
    let mut mask: Vec<bool> = (0..batch * seq).map(|_| rng.random_bool(0.6)).collect();
    for b in 0..batch {
        let t = rng.random_range(0..seq);
        mask[b * seq + t] = true;
    }
    mask
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_weights_form_a_distribution_over_real_positions(
        seed in any::<u64>(),
        batch in 1usize..4,
        seq in 1usize..9,
        width in 1usize..6,
        beta in 0.1f64..4.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let att = AttentionParams::init(&mut store, "att", width, width, &mut rng);
        let h: Vec<f64> = (0..batch * seq * width).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mask = random_mask(&mut rng, batch, seq);

        let run = |h: &[f64]| {
            let mut tape = Tape::new();
            let vars = store.register(&mut tape);
            let hv = tape.constant(Tensor::matrix(batch * seq, width, h.to_vec()).unwrap());
            let out = attention_pool(&mut tape, &vars, &att, hv, seq, &mask, beta).unwrap();
            (tape.value(out.alpha).clone(), tape.value(out.context).clone())
        };
        let (alpha, context) = run(&h);
        prop_assert_eq!(alpha.shape(), &[batch, seq]);
        for b in 0..batch {
            let row = alpha.row(b);
            prop_assert!(row.iter().all(|&a| a >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for t in 0..seq {
                if !mask[b * seq + t] {
                    prop_assert_eq!(row[t], 0.0);
                }
            }
        }

        // whatever sits under the mask cannot reach the context vector
        let mut perturbed = h.clone();
        for (i, &m) in mask.iter().enumerate() {
            if !m {
                perturbed[i * width..(i + 1) * width].iter_mut().for_each(|v| *v += rng.random_range(-50.0..50.0));
            }
        }
        let (alpha2, context2) = run(&perturbed);
        prop_assert_eq!(alpha.data(), alpha2.data());
        prop_assert_eq!(context.data(), context2.data());
    }

    #[test]
    fn encoded_ids_stay_inside_the_vocabulary(
        train in prop::collection::vec("[a-e ]{0,20}", 1..6),
        query in "[a-h ]{0,40}",
        n_max in 1usize..30,
        min_count in 1u64..3,
    ) {
        let vocab = match build_vocab(train.iter().map(String::as_str), min_count) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        let enc = encode_text(&query, &vocab, n_max).unwrap();
        prop_assert_eq!(enc.ids.len(), n_max);
        prop_assert_eq!(enc.mask.len(), n_max);
        prop_assert!(enc.ids.iter().all(|&id| (id as usize) < vocab.size()));
        // real tokens come first
        let real = enc.real_len();
        prop_assert!(enc.mask[..real].iter().all(|&m| m));
    }

    #[test]
    fn split_partitions_every_index(
        labels in prop::collection::vec(0usize..4, 1..200),
        seed in any::<u64>(),
        stratify in any::<bool>(),
    ) {
        let s = split_indices(&labels, SplitRatios::default(), seed, stratify).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        prop_assert_eq!(&s, &split_indices(&labels, SplitRatios::default(), seed, stratify).unwrap());
        if stratify {
            for class in 0..4 {
                let n = labels.iter().filter(|&&l| l == class).count();
                if n < 3 {
                    continue;
                }
                let count = |idx: &[usize]| idx.iter().filter(|&&i| labels[i] == class).count() as f64;
                prop_assert!((count(&s.train) - 0.6 * n as f64).abs() <= 1.0);
                prop_assert!((count(&s.valid) - 0.2 * n as f64).abs() <= 1.0);
                prop_assert!((count(&s.test) - 0.2 * n as f64).abs() <= 1.0);
            }
        }
    }
}

fn random_batch(rng: &mut ChaCha8Rng, batch: usize, n: usize, vocab: usize) -> Vec<TokenIds> {
    (0..batch)
        .map(|_| {
            let real = rng.random_range(1..=n);
            let ids = (0..n)
                .map(|t| {
                    if t < real {
                        rng.random_range(2..vocab as u32)
                    } else {
                        0
                    }
                })
                .collect();
            let mask = (0..n).map(|t| t < real).collect();
            TokenIds { ids, mask }
        })
        .collect()
}

#[test]
fn batch_rows_are_independent_and_follow_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for variant in Variant::ALL {
        let model = HarmClassifier::build(ModelConfig::tiny(variant, 3)).unwrap();
        let cfg = model.config().clone();
        let batch = random_batch(&mut rng, 5, cfg.n_max, cfg.vocab_size);
        let refs: Vec<&TokenIds> = batch.iter().collect();
        let together = model.forward(&refs).unwrap();

        for (i, r) in batch.iter().enumerate() {
            let alone = model.forward(&[r]).unwrap();
            for (a, b) in alone.row(0).iter().zip(together.row(i)) {
                assert!((a - b).abs() <= 1e-12, "{variant:?} row {i}");
            }
        }

        let perm = [3, 0, 4, 1, 2];
        let shuffled: Vec<&TokenIds> = perm.iter().map(|&i| &batch[i]).collect();
        let out = model.forward(&shuffled).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            for (a, b) in out.row(j).iter().zip(together.row(i)) {
                assert!((a - b).abs() <= 1e-12, "{variant:?} permuted row {j}");
            }
        }
    }
}

#[test]
fn parameter_count_has_closed_form() {
    let (vocab, classes) = (500, 3);
    for variant in Variant::ALL {
        let cfg = ModelConfig::new(variant, vocab, classes);
        let model = HarmClassifier::build(cfg.clone()).unwrap();
        let (e, c, h) = (cfg.embed_dim, cfg.channels, cfg.hidden_size);
        let widths = &cfg.filter_widths;

        let mut expected = vocab * e;
        let mut d = e;
        if variant.has_conv() {
            expected += widths.iter().map(|&k| k * e * c + c).sum::<usize>();
            d = widths.len() * c;
        }
        let feat = match variant.recurrent() {
            Some((kind, bi)) => {
                let dirs = if bi { 2 } else { 1 };
                expected += dirs * kind.gate_blocks() * h * (d + h + 1);
                dirs * h
            }
            None => widths.len() * c,
        };
        if variant.has_attention() {
            expected += feat * feat + 2 * feat;
        }
        expected += feat * classes + classes;
        assert_eq!(model.num_parameters(), expected, "{variant:?}");
    }
}
