//! Train the same CNN with exact ReLU and with the polynomial surrogate on
//! the synthetic dataset and compare held-out accuracy.
//!
//! Run with `--release`; the default is 2000 images and 20 epochs.

use hecnn::activation::PolyActivation;
use hecnn::model_io::{gen_synthetic, SyntheticSpec};
use hecnn::train::{accuracy, small_cnn, train, ActivationMode, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let data = gen_synthetic(&SyntheticSpec::with_samples(samples, 11))?;
    let (train_set, test_set) = data.split_at(samples * 4 / 5);
    println!("{} training and {} held-out images, {:.0}% positive", train_set.len(), test_set.len(), 100.0 * data.positive_fraction());

    let spec = small_cnn("relu_poly", PolyActivation::published_relu());
    let cfg = TrainConfig::default();
    let mut results = Vec::new();
    for mode in [ActivationMode::ExactRelu, ActivationMode::Surrogate] {
        let report = train(&spec, mode, &train_set, &cfg)?;
        let acc = accuracy(&report.model, mode, &test_set)?;
        println!("{mode:?}: final loss {:.4}, accuracy {:.2}%", report.epoch_loss.last().unwrap(), 100.0 * acc);
        results.push(acc);
    }
    println!("gap {:.2} percentage points", 100.0 * (results[0] - results[1]));
    Ok(())
}
