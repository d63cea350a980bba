//! Save a model as manifest plus weight blob, reload it and check that the
//! outputs are bit-identical.

use hecnn::activation::PolyActivation;
use hecnn::model_io::{load_model, save_model, weights_path};
use hecnn::nn::{forward_plain, LayerSpec, Model, ModelSpec, Shape, TensorPlain};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ModelSpec::new(
        [6, 6, 2],
        vec![
            LayerSpec::conv_valid(3, 3),
            LayerSpec::activation("relu_poly"),
            LayerSpec::pool(2),
            LayerSpec::Dense { units: 1 },
            LayerSpec::Sigmoid,
        ],
    )
    .with_activation("relu_poly", PolyActivation::published_relu());
    let model = Model::with_generator(spec, |layer, i| ((layer * 31 + i * 7) % 13) as f64 / 13.0 - 0.5)?;

    let dir = std::env::temp_dir().join(format!("hecnn-model-files-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.json");
    save_model(&model, &path)?;
    println!("wrote {} and {}", path.display(), weights_path(&path).display());
    println!("{}", std::fs::read_to_string(&path)?);

    let back = load_model(&path)?;
    let x = TensorPlain::new(2, Shape::spatial(6, 6, 2), (0..144).map(|i| (i % 9) as f64 / 9.0).collect())?;
    let (a, b) = (forward_plain(&model, &x)?, forward_plain(&back, &x)?);
    let same = a.data.iter().zip(&b.data).all(|(p, q)| p.to_bits() == q.to_bits());
    println!("reloaded model is identical: {}, outputs bit-identical: {same}", back == model);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
