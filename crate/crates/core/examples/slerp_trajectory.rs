//! Walk the great circle between a text and an image embedding.
//!
//! Prints, for each mix ratio, the angle to both endpoints. The angle to the
//! image grows linearly in the ratio, which is what separates a geodesic mix
//! from a plain weighted average.
//!
//! Run: `cargo run --example slerp_trajectory`

use gmixer::{angle_between, slerp, MixRatio, UnitVector};

fn main() -> gmixer::Result<()> {
    let text = UnitVector::normalize(vec![1.0, 0.2, 0.0, 0.1])?;
    let image = UnitVector::normalize(vec![0.1, 1.0, 0.3, 0.0])?;
    let theta = angle_between(&text, &image)?;
    println!("angle(text, image) = {theta:.4} rad");
    println!("lambda  angle->image  angle->text  lambda*theta  lerp angle->image");

    for step in 0..=10 {
        let lambda = MixRatio::new(step as f64 / 10.0)?;
        let m = slerp(&text, &image, lambda)?;
        let lerp = UnitVector::normalize(
            text.as_slice()
                .iter()
                .zip(image.as_slice())
                .map(|(t, i)| lambda.value() * t + (1.0 - lambda.value()) * i)
                .collect(),
        )?;
        println!(
            "{:>6.1}  {:>12.4}  {:>11.4}  {:>12.4}  {:>17.4}",
            lambda.value(),
            angle_between(&m, &image)?,
            angle_between(&m, &text)?,
            lambda.value() * theta,
            angle_between(&lerp, &image)?,
        );
    }
    Ok(())
}
