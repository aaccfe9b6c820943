//! The linear LL decoder on its own: embed a message directly into an image by
//! gradient steps on the decoder loss, then read it back.

use splatmark::codec::{bce_with_logits, bit_accuracy, build_decoder, Message};
use splatmark::metrics::psnr;
use splatmark::render::render;
use splatmark::synth::{make_synthetic_scene, SynthConfig};

fn main() -> splatmark::Result<()> {
    let scene = make_synthetic_scene(4, &SynthConfig::default())?;
    let host = render(&scene.model, &scene.cameras[0]).image;
    let mut dec = build_decoder(0x5eed, 32, 128, 3)?;
    dec.calibrate_bias(std::slice::from_ref(&host))?;
    let msg = Message::from_hex("c0ffee42")?;
    println!("message {msg}, host decodes to bit accuracy {:.3}", bit_accuracy(&dec.decode(&host)?, &msg));

    let mut img = host.clone();
    for step in 0..=200 {
        let z = dec.decode(&img)?;
        let (loss, dz) = bce_with_logits(&z, &msg);
        if step % 50 == 0 {
            println!("step {step:>3}: loss {loss:.4} bit_acc {:.3} psnr {:.2}", bit_accuracy(&z, &msg), psnr(&img, &host)?);
        }
        let g = dec.decode_backward(img.width, img.height, &dz)?;
        img.data.iter_mut().zip(&g.data).for_each(|(v, d)| *v = (*v - 0.5 * d).clamp(0.0, 1.0));
    }
    let z = dec.decode(&img)?;
    println!("decoded {}", Message::from_logits(&z)?);
    Ok(())
}
