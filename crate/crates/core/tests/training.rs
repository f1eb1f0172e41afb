mod common;

use common::*;
use lrplab::data::{BatchIterator, Sample};
use lrplab::nn::{batch_gradients, cross_entropy, AdamConfig, AdamState, Model, Recipe};
use rand::Rng;

#[test]
fn small_network_overfits_a_tiny_set() {
    let mut r = rng(77);
    let samples: Vec<Sample> = (0..64)
        .map(|_| Sample {
            image: uniform(&mut r, &[1, 8, 8], 0.0, 1.0),
            label: r.random_range(0..10),
        })
        .collect();
    let recipe = Recipe::parse("name o\ninput 1 8 8\nconv 8 3 1 1\nrelu\nmaxpool 2 2\nflatten\ndense 32\nrelu\ndense 10\n").unwrap();
    let mut model = Model::from_recipe(&recipe, 5).unwrap();
    let mut adam = AdamState::new(AdamConfig { lr: 3e-3, ..AdamConfig::default() }, &model.params());
    let mean_loss = |m: &Model| {
        samples
            .iter()
            .map(|s| cross_entropy(&m.forward(&s.image).unwrap(), s.label as usize).unwrap().0)
            .sum::<f64>()
            / samples.len() as f64
    };
    let start = mean_loss(&model);
    let mut batches = BatchIterator::new(samples.len(), 4, 1).unwrap();
    let mut reached = None;
    for step in 1..=2000 {
        let b = batches.next().unwrap();
        let batch: Vec<Sample> = b.indices.iter().map(|&i| samples[i].clone()).collect();
        let (_, g) = batch_gradients(&model, &batch).unwrap();
        adam.step(model.params_mut(), &g.tensors).unwrap();
        if step % 100 == 0 && mean_loss(&model) < 0.05 {
            reached = Some(step);
            break;
        }
    }
    assert!(reached.is_some(), "loss {start} -> {}", mean_loss(&model));
}
