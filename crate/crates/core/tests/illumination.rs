use facekit::evaluation::{ramp_field, render_texture};
use facekit::ingi::{ingi, IngiParams};
use facekit::Image;

fn lit(texture: &Image, field: &Image) -> Image {
    let px = texture.pixels().iter().zip(field.pixels()).map(|(a, b)| a * b).collect();
    Image::new(texture.width(), texture.height(), px).unwrap()
}

// A strong multiplicative ramp leaves a large raw difference. INGI has to
// shrink it, although the ramp's own log-gradient survives integration.
#[test]
fn ingi_reduces_ramp_difference() {
    let params = IngiParams::default();
    for seed in 0..5u64 {
        let tex = render_texture(500 + seed, seed as usize, 64).unwrap();
        let field = ramp_field(64, 1.0, 0.3 * seed as f64).unwrap();
        let shaded = lit(&tex, &field);
        let raw = shaded.rms_diff(&tex).unwrap();
        let normalized = ingi(&shaded, &params).unwrap().rms_diff(&ingi(&tex, &params).unwrap()).unwrap();
        assert!(raw >= 0.2, "seed {seed}: raw {raw}");
        assert!(normalized < raw, "seed {seed}: ingi {normalized} raw {raw}");
    }
}
