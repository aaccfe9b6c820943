//! Haar pyramid of a render: reconstruction error, energy preservation and
//! how the energy splits across subbands.

use splatmark::render::render;
use splatmark::synth::{make_synthetic_scene, SynthConfig};
use splatmark::wavelet::{dwt2, idwt2};

fn main() -> splatmark::Result<()> {
    let scene = make_synthetic_scene(1, &SynthConfig::default())?;
    let img = render(&scene.model, &scene.cameras[0]).image;
    let pyr = dwt2(&img, 3)?;
    let back = idwt2(&pyr)?;
    let err = img.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e_img: f64 = img.data.iter().map(|v| v * v).sum();
    let e_pyr: f64 = pyr.iter().map(|p| p.energy()).sum();
    println!("reconstruction max error {err:e}, energy {e_img:.6} vs {e_pyr:.6}");
    for (c, p) in pyr.iter().enumerate() {
        let detail: Vec<String> = p
            .levels
            .iter()
            .enumerate()
            .map(|(l, lv)| format!("L{} {:.2e}", l + 1, lv.lh.energy() + lv.hl.energy() + lv.hh.energy()))
            .collect();
        println!("channel {c}: LL {:.3} ({}x{}) | {}", p.ll.energy(), p.ll.width, p.ll.height, detail.join(" "));
    }

    // odd sizes pad by symmetric extension and still invert exactly
    let odd = splatmark::image::Image::from_fn(37, 23, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 11.0);
    let r = idwt2(&dwt2(&odd, 3)?)?;
    println!("37x23 round trip max error {:e}", odd.data.iter().zip(&r.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    Ok(())
}
