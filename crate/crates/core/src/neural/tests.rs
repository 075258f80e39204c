use rand::Rng as _;

use super::*;
use crate::corpus::{Document, Source};

const POS: SentimentLabel = SentimentLabel::Positive;
const NEG: SentimentLabel = SentimentLabel::Negative;
const NEU: SentimentLabel = SentimentLabel::Neutral;

fn tiny_vocab() -> Vocab {
    Vocab::build([["a", "b", "c", "d", "e"]])
}

/// Vocab 7, embed 5, hidden 3 then 2, with weights large enough that every
/// gate is away from saturation and zero.
fn tiny_model(seed: u64) -> BiLstmModel {
    let dims = BiLstmDims { vocab: 7, embed: 5, hidden1: 3, hidden2: 2 };
    let mut params = BiLstmParams::init(dims, seed);
    let mut rng = crate::seed::rng(seed ^ 0xabc);
    for block in params.blocks_mut() {
        block.iter_mut().for_each(|v| *v = rng.gen_range(-0.8..0.8));
    }
    BiLstmModel::new(params, tiny_vocab(), 0.3, 4).unwrap()
}

fn tiny_batch() -> SequenceBatch {
    SequenceBatch::from_sequences(vec![vec![2, 5, 3, 6], vec![4, 2, 1]], vec![POS, NEU], 4)
}

#[test]
fn encode_pads_truncates_and_handles_empty_text() {
    let vocab = tiny_vocab();
    assert_eq!(vocab.len(), 7);
    assert_eq!(vocab.encode(&["a", "b", "zz"], 5), [2, 3, UNK_ID]);
    assert_eq!(vocab.encode(&["a"; 10], 5).len(), 5);
    assert_eq!(vocab.encode::<&str>(&[], 5), [UNK_ID]);
    let docs = vec![
        Document::new("1", "a b c", Some(NEG), Source::Gold),
        Document::new("2", "", Some(POS), Source::Gold),
    ];
    let batches = encode(&docs, &vocab, 5, 8).unwrap();
    assert_eq!(batches.len(), 1);
    assert_eq!(batches[0].token_ids[0], [2, 3, 4, PAD_ID, PAD_ID]);
    assert_eq!(batches[0].lengths, [3, 1]);
    assert_eq!(batches[0].token_ids[1][0], UNK_ID);
}

#[test]
fn probabilities_are_a_distribution() {
    let m = tiny_model(1);
    for train in [false, true] {
        let (probs, _) = m.forward(&tiny_batch(), train, 3).unwrap();
        for row in probs {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
}

#[test]
fn eval_mode_ignores_the_seed() {
    let m = tiny_model(2);
    let a = m.forward(&tiny_batch(), false, 1).unwrap().0;
    let b = m.forward(&tiny_batch(), false, 99).unwrap().0;
    assert_eq!(a, b);
    let c = m.forward(&tiny_batch(), true, 1).unwrap().0;
    assert_ne!(a, c);
}

#[test]
fn zero_parameters_give_uniform_output_and_ln3_loss() {
    let dims = BiLstmDims { vocab: 7, embed: 5, hidden1: 3, hidden2: 2 };
    let m = BiLstmModel::new(BiLstmParams::zeros(dims), tiny_vocab(), 0.3, 4).unwrap();
    let (probs, _) = m.forward(&tiny_batch(), false, 0).unwrap();
    for row in probs {
        assert!(row.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }
    let (loss, _) = m.loss_and_grads(&tiny_batch(), true, 0).unwrap();
    assert!((loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn gradients_match_central_differences() {
    let m = tiny_model(7);
    for train in [false, true] {
        let report = gradient_check(&m, &tiny_batch(), train, 5, 1e-5).unwrap();
        // embedding, 4 cells x 3 arrays x 4 gates, dense, dense bias
        assert_eq!(report.len(), 1 + 48 + 2);
        for r in &report {
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }
}

#[test]
fn padding_never_changes_the_output() {
    let m = tiny_model(3);
    let short = SequenceBatch::from_sequences(vec![vec![2, 5, 3]], vec![POS], 3);
    let mut padded = SequenceBatch::from_sequences(vec![vec![2, 5, 3]], vec![POS], 8);
    let a = m.forward(&short, false, 0).unwrap().0;
    assert_eq!(a, m.forward(&padded, false, 0).unwrap().0);
    // Garbage beyond the length is ignored too.
    padded.token_ids[0][5] = 6;
    assert_eq!(a, m.forward(&padded, false, 0).unwrap().0);
}

fn swap_halves(v: &[f64]) -> Vec<f64> {
    let h = v.len() / 2;
    [&v[h..], &v[..h]].concat()
}

fn swap_column_halves(m: &mut Matrix) {
    for r in 0..m.rows {
        let row = swap_halves(m.row(r));
        m.row_mut(r).copy_from_slice(&row);
    }
}

#[test]
fn reversing_input_and_swapping_directions_is_symmetric() {
    let m = tiny_model(11);
    let mut mirrored = m.clone();
    let p = &mut mirrored.params;
    std::mem::swap(&mut p.l1_fwd, &mut p.l1_bwd);
    std::mem::swap(&mut p.l2_fwd, &mut p.l2_bwd);
    swap_column_halves(&mut p.l2_fwd.input);
    swap_column_halves(&mut p.l2_bwd.input);
    swap_column_halves(&mut p.dense);

    let seqs = vec![vec![2, 5, 3, 6], vec![4, 2, 1]];
    let reversed: Vec<Vec<u32>> = seqs.iter().map(|s| s.iter().rev().copied().collect()).collect();
    let batch = SequenceBatch::from_sequences(seqs, vec![POS, NEU], 4);
    let rbatch = SequenceBatch::from_sequences(reversed, vec![POS, NEU], 4);
    let (pa, ca) = m.forward(&batch, false, 0).unwrap();
    let (pb, cb) = mirrored.forward(&rbatch, false, 0).unwrap();
    for (za, zb) in ca.classifier_inputs().iter().zip(cb.classifier_inputs()) {
        for (x, y) in swap_halves(za).iter().zip(zb) {
            assert!((x - y).abs() < 1e-14);
        }
    }
    for (ra, rb) in pa.iter().zip(&pb) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn duplicating_the_batch_changes_nothing() {
    let m = tiny_model(4);
    let b = tiny_batch();
    let mut doubled = b.clone();
    doubled.token_ids.extend(b.token_ids.clone());
    doubled.lengths.extend(b.lengths.clone());
    doubled.labels.extend(b.labels.clone());
    let (l1, g1) = m.loss_and_grads(&b, false, 0).unwrap();
    let (l2, g2) = m.loss_and_grads(&doubled, false, 0).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    for ((_, a), (_, b)) in g1.blocks().iter().zip(g2.blocks()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn invalid_batches_are_rejected() {
    let m = tiny_model(1);
    let mut b = tiny_batch();
    b.lengths[0] = 0;
    assert!(m.forward(&b, false, 0).is_err());
    let mut b = tiny_batch();
    b.token_ids[1][0] = 7;
    assert!(m.forward(&b, false, 0).is_err());
}

#[test]
fn non_finite_activations_are_located() {
    let mut m = tiny_model(1);
    m.params.embedding.row_mut(5).fill(f64::NAN);
    let err = m.forward(&tiny_batch(), false, 0).unwrap_err().to_string();
    assert!(err.contains("batch item 0") && err.contains("step 1"), "{err}");
}

/// 40 sentences of filler words where one marker token decides the class.
fn marker_dataset(seed: u64) -> Dataset {
    let filler = ["da", "le", "bo", "ka", "wa", "ne", "ru", "si", "to", "mi"];
    let markers = [(POS, "xosh"), (NEG, "xrap"), (NEU, "asayi")];
    let mut rng = crate::seed::rng(seed);
    let docs = (0..40)
        .map(|i| {
            let (label, marker) = markers[i % 3];
            let mut words: Vec<&str> = (0..rng.gen_range(3..7)).map(|_| filler[rng.gen_range(0..10)]).collect();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, marker);
            Document::new(format!("m{i}"), words.join(" "), Some(label), Source::Gold)
        })
        .collect();
    Dataset::new(docs).unwrap()
}

#[test]
fn learns_the_marker_task() {
    let ds = marker_dataset(5);
    let cfg = NeuralTrainConfig { learning_rate: 1e-2, batch_size: 8, epochs: 30, ..Default::default() };
    let m = train_bilstm(&ds, &ds, &cfg).unwrap();
    let texts: Vec<&str> = ds.iter().map(|d| d.normalized_text.as_str()).collect();
    let preds = m.predict_texts(&texts).unwrap();
    let correct = preds.iter().zip(ds.iter()).filter(|(p, d)| Some(p.label) == d.label).count();
    assert!(correct as f64 / 40.0 >= 0.95, "{correct}/40");
}

#[test]
fn training_is_deterministic() {
    let ds = marker_dataset(6);
    let cfg = NeuralTrainConfig { epochs: 2, hidden1: 8, hidden2: 4, embed_dim: 6, ..Default::default() };
    let a = train_bilstm(&ds, &ds, &cfg).unwrap();
    assert_eq!(a, train_bilstm(&ds, &ds, &cfg).unwrap());
    let other = NeuralTrainConfig { seed: 1, ..cfg };
    assert_ne!(a, train_bilstm(&ds, &ds, &other).unwrap());
}

#[test]
fn single_class_data_predicts_that_class() {
    let ds = marker_dataset(7);
    let docs: Vec<Document> = ds.iter().map(|d| Document { label: Some(NEU), ..d.clone() }).collect();
    let ds = Dataset::new(docs).unwrap();
    let m = train_bilstm(&ds, &ds, &NeuralTrainConfig::default()).unwrap();
    for text in ["da le xosh", "xrap", "", "unseen words only"] {
        assert_eq!(m.predict_text(text).unwrap().label, NEU);
    }
}

#[test]
fn checkpoint_round_trips() {
    let m = tiny_model(9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bilstm.json");
    m.save(&path, Some(&NeuralTrainConfig::default())).unwrap();
    assert_eq!(BiLstmModel::load(&path).unwrap(), m);
}

#[test]
fn empty_splits_are_rejected() {
    let ds = marker_dataset(1);
    assert!(train_bilstm(&Dataset::empty(), &ds, &NeuralTrainConfig::default()).is_err());
    assert!(train_bilstm(&ds, &Dataset::empty(), &NeuralTrainConfig::default()).is_err());
}
