//! Training loop behaviour on small synthetic data.

use compdeg_core::network::{init_network, ArchitectureSpec, NetworkKind};
use compdeg_core::training::{
    make_batch, sample_patches, train_on_images, DegradationRanges, OptimizerConfig, Trainer,
    TrainingConfig,
};
use compdeg_core::{synth, Image, Seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixed_batch_patches() -> Vec<Image> {
    let images = synth::scenes(Seed(31), 8, 24, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    images
        .iter()
        .map(|img| sample_patches(std::slice::from_ref(img), 16, 1, &mut rng).unwrap().remove(0))
        .collect()
}

/// Steps on one fixed batch; returns the step at which the loss first fell
/// below `target`, if it did within `budget` steps.
fn overfit(kind: NetworkKind, budget: usize, target: f64) -> (Option<usize>, f64) {
    let patches = fixed_batch_patches();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = make_batch(kind, &patches, &mut rng, &DegradationRanges::default()).unwrap();
    let weights = init_network(ArchitectureSpec::for_kind(kind), Seed(3)).unwrap();
    let mut trainer = Trainer::new(weights, OptimizerConfig::default());
    let mut last = f64::NAN;
    for step in 0..budget {
        last = trainer.step(&batch).unwrap();
        if last < target {
            return (Some(step), last);
        }
    }
    (None, trainer.loss(&batch).unwrap().min(last))
}

#[test]
fn estimator_memorizes_one_batch() {
    let (hit, loss) = overfit(NetworkKind::Estimator, 500, 1e-3);
    assert!(hit.is_some(), "loss {loss} after 500 steps");
}

#[test]
fn restorer_memorizes_one_batch() {
    let (hit, loss) = overfit(NetworkKind::Restorer, 1000, 1e-3);
    assert!(hit.is_some(), "loss {loss} after 1000 steps");
}

fn small_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        patch_size: 16,
        batch_size: 8,
        epochs: 2,
        patches_per_epoch: 48,
        seed,
        ..TrainingConfig::default()
    }
}

#[test]
fn equal_seeds_train_identically() {
    let images = synth::scenes(Seed(5), 3, 24, 24);
    let (a, ha) = train_on_images(NetworkKind::Restorer, &small_config(9), &images).unwrap();
    let (b, hb) = train_on_images(NetworkKind::Restorer, &small_config(9), &images).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let losses = |h: &compdeg_core::training::TrainingHistory| {
        h.epochs.iter().map(|e| (e.train_loss.to_bits(), e.val_loss.map(f64::to_bits))).collect::<Vec<_>>()
    };
    assert_eq!(losses(&ha), losses(&hb));
    assert_eq!(ha.epochs.len(), 2);
    assert!(ha.epochs.iter().all(|e| e.val_loss.is_some()));

    let (c, _) = train_on_images(NetworkKind::Restorer, &small_config(10), &images).unwrap();
    assert_ne!(a.flat_params(), c.flat_params());
}

#[test]
fn trailing_loss_does_not_climb() {
    // 200 Adam steps at lr 1e-3 on a fixed small patch set with fresh
    // degradations each step
    let images = synth::scenes(Seed(6), 4, 24, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let patches = sample_patches(&images, 16, 32, &mut rng).unwrap();
    let weights = init_network(ArchitectureSpec::estimator(), Seed(8)).unwrap();
    let mut trainer = Trainer::new(weights, OptimizerConfig::default());
    let losses: Vec<f64> = (0..200)
        .map(|i| {
            let chunk = &patches[(i * 8) % 32..(i * 8) % 32 + 8];
            let batch = make_batch(NetworkKind::Estimator, chunk, &mut rng, &DegradationRanges::default()).unwrap();
            trainer.step(&batch).unwrap()
        })
        .collect();
    let window = 50;
    let trailing: Vec<f64> = losses
        .windows(window)
        .step_by(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    for pair in trailing.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05, "trailing averages {trailing:?}");
    }
    assert!(trailing.last().unwrap() < trailing.first().unwrap());
}

#[test]
fn batches_leave_patches_untouched() {
    let patches = fixed_batch_patches();
    let before = patches.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [NetworkKind::Estimator, NetworkKind::Restorer] {
        make_batch(kind, &patches, &mut rng, &DegradationRanges::default()).unwrap();
    }
    assert_eq!(patches, before);
}
