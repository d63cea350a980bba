//! Shape inference and level budget for the 21-layer reference network.

use hecnn::model_io::{manifest_from_json, manifest_to_json, table1_preset};
use hecnn::nn::LayerSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = table1_preset();
    let shapes = spec.shape_infer()?;
    let depths = spec.layer_depths()?;
    let mut params = spec.parameter_shapes()?.into_iter();
    println!("{:>3}  {:<14} {:<16} {:>5} {:>12}", "#", "layer", "output", "depth", "parameters");
    for (i, ((layer, shape), depth)) in spec.layers.iter().zip(&shapes).zip(&depths).enumerate() {
        let (w, b) = params.next().unwrap_or((0, 0));
        let detail = match layer {
            LayerSpec::Conv2d { filters, kernel, .. } => format!("conv {filters}x{}x{}", kernel[0], kernel[1]),
            LayerSpec::Dense { units } => format!("dense {units}"),
            other => other.kind_name().to_string(),
        };
        println!("{:>3}  {detail:<14} {:<16} {depth:>5} {:>12}", i + 1, shape.to_string(), w + b);
    }
    println!("total depth {}, parameters {}", spec.depth_cost()?, spec.parameter_count()?);

    let text = manifest_to_json(&spec, "reference.weights")?;
    let (back, _) = manifest_from_json(&text)?;
    println!("manifest round trip keeps shapes: {}", back.shape_infer()? == shapes);
    Ok(())
}
