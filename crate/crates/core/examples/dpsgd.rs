//! DP-SGD on a separable toy set, with the privacy spent per run.
//! Pass a path to also write the generated data set as CSV.

use dp_workbench::dpsgd::{accuracy, separable_blobs, train, DpSgdConfig, Loss};
use dp_workbench::accounting::DeltaConvention;
use dp_workbench::RngStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = separable_blobs(200, &mut RngStream::from_seed(1));
    if let Some(path) = std::env::args().nth(1) {
        data.to_csv(std::fs::File::create(&path)?)?;
        println!("wrote {} rows to {path}", data.len());
    }
    for sigma in [0.0, 0.7, 1.1, 3.0] {
        let config = DpSgdConfig {
            clip_norm: 1.0,
            noise_multiplier: sigma,
            sampling_rate: 0.1,
            steps: 200,
            learning_rate: 0.5,
            delta: Some(DeltaConvention::Explicit(1e-5)),
            loss: Loss::Logistic,
        };
        let out = train(&data, &config, &mut RngStream::from_seed(2))?;
        println!(
            "sigma {sigma:>3}: accuracy {:.3}, epsilon {:.3} at delta {:e}",
            accuracy(&out.weights, &data),
            out.epsilon,
            out.delta
        );
    }
    Ok(())
}
