//! Procedurally drawn, attribute-annotated faces.
//!
//! Every face is an ellipse head with eyes, brows, nose and mouth over a
//! gradient background, plus attribute-conditional overlays (eyeglass frames,
//! nose-width scaling, mustache/goatee patches, eye-aperture scaling, open
//! mouth). Attribute bits match the drawn geometry by construction, and
//! overlay attributes come with rasterization masks, so the set serves as a
//! zero-label-noise oracle for attention and conditioning experiments.
//!
//! Pixel values stay inside [16, 240]: the generators end in tanh and should
//! not be forced into its saturated tails.

use std::path::Path;

use super::{save_manifest, DatasetManifest, ImageU8, ManifestRecord};
use crate::attributes::AttributeVector;
use crate::error::{Error, Result};
use crate::tensor::SeededRng;

/// The six geometry-backed attributes of the synthetic set, with their index
/// in the 38-entry vector (CelebA order with the two off-face wearables
/// dropped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttrKind {
    BigNose,
    Eyeglasses,
    Goatee,
    Mustache,
    NarrowEyes,
    MouthOpen,
}

impl AttrKind {
    pub const ALL: [AttrKind; 6] = [
        AttrKind::BigNose,
        AttrKind::Eyeglasses,
        AttrKind::Goatee,
        AttrKind::Mustache,
        AttrKind::NarrowEyes,
        AttrKind::MouthOpen,
    ];

    pub fn attr_index(self) -> usize {
        match self {
            AttrKind::BigNose => 7,
            AttrKind::Eyeglasses => 15,
            AttrKind::Goatee => 16,
            AttrKind::MouthOpen => 21,
            AttrKind::Mustache => 22,
            AttrKind::NarrowEyes => 23,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttrKind::BigNose => "Big_Nose",
            AttrKind::Eyeglasses => "Eyeglasses",
            AttrKind::Goatee => "Goatee",
            AttrKind::MouthOpen => "Mouth_Slightly_Open",
            AttrKind::Mustache => "Mustache",
            AttrKind::NarrowEyes => "Narrow_Eyes",
        }
    }
}

/// The 38 attribute names: CelebA's 40 minus the two wearables that sit
/// outside an aligned face crop.
pub fn attr_names_38() -> Vec<String> {
    const CELEBA40: [&str; 40] = [
        "5_o_Clock_Shadow", "Arched_Eyebrows", "Attractive", "Bags_Under_Eyes", "Bald",
        "Bangs", "Big_Lips", "Big_Nose", "Black_Hair", "Blond_Hair", "Blurry",
        "Brown_Hair", "Bushy_Eyebrows", "Chubby", "Double_Chin", "Eyeglasses", "Goatee",
        "Gray_Hair", "Heavy_Makeup", "High_Cheekbones", "Male", "Mouth_Slightly_Open",
        "Mustache", "Narrow_Eyes", "No_Beard", "Oval_Face", "Pale_Skin", "Pointy_Nose",
        "Receding_Hairline", "Rosy_Cheeks", "Sideburns", "Smiling", "Straight_Hair",
        "Wavy_Hair", "Wearing_Earrings", "Wearing_Hat", "Wearing_Lipstick",
        "Wearing_Necklace", "Wearing_Necktie", "Young",
    ];
    CELEBA40
        .iter()
        .filter(|n| **n != "Wearing_Necklace" && **n != "Wearing_Necktie")
        .map(|n| n.to_string())
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthAttr {
    pub kind: AttrKind,
    /// Probability the attribute is present on a generated face.
    pub prob: f32,
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub count: usize,
    pub side: usize,
    pub attrs: Vec<SynthAttr>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            count: 8,
            side: 128,
            attrs: AttrKind::ALL
                .iter()
                .map(|k| SynthAttr {
                    kind: *k,
                    prob: 0.5,
                })
                .collect(),
        }
    }
}

/// Full drawing recipe for one face. Attribute flags and geometry are
/// sampled together; tests may force flags and redraw.
#[derive(Debug, Clone)]
pub struct FaceParams {
    pub side: usize,
    pub big_nose: bool,
    pub eyeglasses: bool,
    pub goatee: bool,
    pub mustache: bool,
    pub narrow_eyes: bool,
    pub mouth_open: bool,
    cx: f32,
    cy: f32,
    head_rx: f32,
    head_ry: f32,
    skin: [f32; 3],
    hair: [f32; 3],
    bg_top: [f32; 3],
    bg_bottom: [f32; 3],
    eye_dx: f32,
    eye_y: f32,
    eye_rx: f32,
    eye_ry: f32,
    iris: [f32; 3],
    nose_w: f32,
    mouth_y: f32,
    mouth_rx: f32,
    texture_amp: f32,
    texture_fx: f32,
    texture_fy: f32,
    texture_phase: f32,
    glass_color: [f32; 3],
}

pub struct SynthRecord {
    pub file: String,
    pub image: ImageU8,
    pub attrs: AttributeVector,
    /// Rasterization masks of the drawn overlay attributes (255 = overlay).
    pub masks: Vec<(AttrKind, Vec<u8>)>,
    pub params: FaceParams,
}

pub fn face_params(rng: &mut SeededRng, side: usize, flags: &[(AttrKind, bool)]) -> FaceParams {
    let s = side as f32 / 128.0;
    let get = |k: AttrKind| flags.iter().find(|(fk, _)| *fk == k).map_or(false, |(_, v)| *v);
    let base = 90.0 + rng.uniform(0.0, 70.0);
    let skin = [
        base + rng.uniform(60.0, 85.0),
        base + rng.uniform(25.0, 45.0),
        base + rng.uniform(0.0, 20.0),
    ];
    let hair_base = rng.uniform(30.0, 90.0);
    FaceParams {
        side,
        big_nose: get(AttrKind::BigNose),
        eyeglasses: get(AttrKind::Eyeglasses),
        goatee: get(AttrKind::Goatee),
        mustache: get(AttrKind::Mustache),
        narrow_eyes: get(AttrKind::NarrowEyes),
        mouth_open: get(AttrKind::MouthOpen),
        cx: (64.0 + rng.uniform(-3.0, 3.0)) * s,
        cy: (66.0 + rng.uniform(-3.0, 3.0)) * s,
        head_rx: (36.0 + rng.uniform(0.0, 6.0)) * s,
        head_ry: (46.0 + rng.uniform(0.0, 6.0)) * s,
        skin: skin.map(|v| v.clamp(60.0, 235.0)),
        hair: [hair_base, hair_base * 0.8, hair_base * 0.6],
        bg_top: [rng.uniform(40.0, 110.0), rng.uniform(40.0, 110.0), rng.uniform(60.0, 130.0)],
        bg_bottom: [rng.uniform(90.0, 160.0), rng.uniform(90.0, 160.0), rng.uniform(110.0, 180.0)],
        eye_dx: (15.0 + rng.uniform(-1.5, 1.5)) * s,
        eye_y: (56.0 + rng.uniform(-2.0, 2.0)) * s,
        eye_rx: (7.0 + rng.uniform(-0.8, 0.8)) * s,
        eye_ry: (4.2 + rng.uniform(-0.5, 0.5)) * s,
        iris: [rng.uniform(30.0, 90.0), rng.uniform(40.0, 100.0), rng.uniform(60.0, 140.0)],
        nose_w: (5.5 + rng.uniform(-0.8, 0.8)) * s,
        mouth_y: (88.0 + rng.uniform(-2.0, 2.0)) * s,
        mouth_rx: (10.5 + rng.uniform(-1.5, 1.5)) * s,
        texture_amp: 5.0 + rng.uniform(0.0, 3.0),
        texture_fx: rng.uniform(0.10, 0.18),
        texture_fy: rng.uniform(0.10, 0.18),
        texture_phase: rng.uniform(0.0, std::f32::consts::TAU),
        glass_color: [rng.uniform(18.0, 45.0); 3],
    }
}

struct Canvas {
    side: usize,
    data: Vec<f32>,
}

impl Canvas {
    fn new(side: usize) -> Self {
        Canvas {
            side,
            data: vec![0.0; side * side * 3],
        }
    }

    fn blend(&mut self, x: usize, y: usize, color: [f32; 3], alpha: f32) {
        if alpha <= 0.0 {
            return;
        }
        let a = alpha.min(1.0);
        let i = (y * self.side + x) * 3;
        for c in 0..3 {
            self.data[i + c] += a * (color[c] - self.data[i + c]);
        }
    }

    /// Soft-edged filled ellipse; `mask` collects alpha > 0.5 pixels.
    fn ellipse(
        &mut self,
        cx: f32,
        cy: f32,
        rx: f32,
        ry: f32,
        color: [f32; 3],
        mask: Option<&mut Vec<u8>>,
    ) {
        let aa = 1.0f32;
        let x0 = ((cx - rx - 2.0).floor().max(0.0)) as usize;
        let x1 = ((cx + rx + 2.0).ceil().min(self.side as f32 - 1.0)) as usize;
        let y0 = ((cy - ry - 2.0).floor().max(0.0)) as usize;
        let y1 = ((cy + ry + 2.0).ceil().min(self.side as f32 - 1.0)) as usize;
        let mut local_mask = mask;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f32 - cx) / rx;
                let dy = (y as f32 - cy) / ry;
                let sd = (dx * dx + dy * dy).sqrt();
                // Convert the normalized distance to an approximate pixel
                // distance from the boundary for a ~1px soft edge.
                let r_local = (rx * ry) / (rx * dy.abs().max(1e-6) + ry * dx.abs().max(1e-6))
                    .max(1.0);
                let alpha = ((1.0 - sd) * r_local / aa).clamp(0.0, 1.0);
                self.blend(x, y, color, alpha);
                if alpha > 0.5 {
                    if let Some(m) = local_mask.as_deref_mut() {
                        m[y * self.side + x] = 255;
                    }
                }
            }
        }
    }

    /// Axis-aligned frame (outline) of given line width, hard edges.
    #[allow(clippy::too_many_arguments)]
    fn frame(
        &mut self,
        cx: f32,
        cy: f32,
        rx: f32,
        ry: f32,
        lw: f32,
        color: [f32; 3],
        mask: &mut Vec<u8>,
    ) {
        let x0 = ((cx - rx - lw).floor().max(0.0)) as usize;
        let x1 = ((cx + rx + lw).ceil().min(self.side as f32 - 1.0)) as usize;
        let y0 = ((cy - ry - lw).floor().max(0.0)) as usize;
        let y1 = ((cy + ry + lw).ceil().min(self.side as f32 - 1.0)) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f32 - cx).abs();
                let dy = (y as f32 - cy).abs();
                let inside_outer = dx <= rx + lw && dy <= ry + lw;
                let inside_inner = dx < rx - lw && dy < ry - lw;
                if inside_outer && !inside_inner {
                    self.blend(x, y, color, 1.0);
                    mask[y * self.side + x] = 255;
                }
            }
        }
    }

    /// Horizontal bar with hard edges.
    #[allow(clippy::too_many_arguments)]
    fn bar(
        &mut self,
        x0: f32,
        x1: f32,
        y0: f32,
        y1: f32,
        color: [f32; 3],
        mask: Option<&mut Vec<u8>>,
    ) {
        let xa = x0.floor().max(0.0) as usize;
        let xb = (x1.ceil().min(self.side as f32 - 1.0)) as usize;
        let ya = y0.floor().max(0.0) as usize;
        let yb = (y1.ceil().min(self.side as f32 - 1.0)) as usize;
        let mut m = mask;
        for y in ya..=yb {
            for x in xa..=xb {
                self.blend(x, y, color, 1.0);
                if let Some(mm) = m.as_deref_mut() {
                    mm[y * self.side + x] = 255;
                }
            }
        }
    }

    fn into_image(self) -> ImageU8 {
        let mut img = ImageU8::new(self.side, self.side);
        for (i, v) in self.data.iter().enumerate() {
            img.data[i] = (v.clamp(16.0, 240.0) + 0.5).floor() as u8;
        }
        img
    }
}

/// Draws one face. Returns the image and the overlay masks for every drawn
/// mask-able attribute (eyeglasses, mustache, goatee).
pub fn draw_face(p: &FaceParams) -> (ImageU8, Vec<(AttrKind, Vec<u8>)>) {
    let side = p.side;
    let mut cv = Canvas::new(side);

    // Background gradient.
    for y in 0..side {
        let t = y as f32 / side as f32;
        let color = [
            p.bg_top[0] + t * (p.bg_bottom[0] - p.bg_top[0]),
            p.bg_top[1] + t * (p.bg_bottom[1] - p.bg_top[1]),
            p.bg_top[2] + t * (p.bg_bottom[2] - p.bg_top[2]),
        ];
        for x in 0..side {
            cv.blend(x, y, color, 1.0);
        }
    }

    // Hair cap behind the head, then the head itself.
    cv.ellipse(p.cx, p.cy - p.head_ry * 0.45, p.head_rx * 1.05, p.head_ry * 0.72, p.hair, None);
    cv.ellipse(p.cx, p.cy, p.head_rx, p.head_ry, p.skin, None);

    // Gentle skin texture so bicubic degradation has detail to lose.
    for y in 0..side {
        for x in 0..side {
            let dx = (x as f32 - p.cx) / p.head_rx;
            let dy = (y as f32 - p.cy) / p.head_ry;
            if dx * dx + dy * dy < 0.92 {
                let v = p.texture_amp
                    * (std::f32::consts::TAU
                        * (p.texture_fx * x as f32 + p.texture_fy * y as f32)
                        + p.texture_phase)
                        .sin();
                let i = (y * side + x) * 3;
                for c in 0..3 {
                    cv.data[i + c] += v;
                }
            }
        }
    }

    // Forehead shadow under the hairline.
    cv.ellipse(
        p.cx,
        p.cy - p.head_ry * 0.62,
        p.head_rx * 0.85,
        p.head_ry * 0.18,
        [p.hair[0] * 1.2, p.hair[1] * 1.2, p.hair[2] * 1.2],
        None,
    );

    // Eyes, brows and pupils.
    let aperture = if p.narrow_eyes { 0.42 } else { 1.0 };
    let ery = (p.eye_ry * aperture).max(1.2);
    for side_sign in [-1.0f32, 1.0] {
        let ex = p.cx + side_sign * p.eye_dx;
        cv.ellipse(ex, p.eye_y - p.eye_ry - 3.5, p.eye_rx + 1.0, 1.6, p.hair, None);
        cv.ellipse(ex, p.eye_y, p.eye_rx, ery, [235.0, 235.0, 235.0], None);
        cv.ellipse(ex, p.eye_y, 2.2_f32.min(p.eye_rx * 0.4), 2.2f32.min(ery), p.iris, None);
        cv.ellipse(ex, p.eye_y, 1.1, 1.1f32.min(ery), [25.0, 25.0, 25.0], None);
    }

    // Nose: a wedge widening toward the tip, wider and shaded when big.
    let nose_scale = if p.big_nose { 1.9 } else { 1.0 };
    let nose_color = [
        p.skin[0] * 0.82,
        p.skin[1] * 0.80,
        p.skin[2] * 0.80,
    ];
    let nose_top = p.eye_y + 4.0;
    let nose_bottom = p.mouth_y - 9.0;
    let steps = (nose_bottom - nose_top).max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f32 / steps as f32;
        let y = nose_top + t * (nose_bottom - nose_top);
        let w = p.nose_w * nose_scale * (0.35 + 0.65 * t);
        cv.ellipse(p.cx, y, w, 1.4, nose_color, None);
    }
    // Nostrils.
    let nr = if p.big_nose { 2.2 } else { 1.4 };
    cv.ellipse(p.cx - p.nose_w * nose_scale * 0.55, nose_bottom, nr, nr * 0.8, [70.0, 55.0, 50.0], None);
    cv.ellipse(p.cx + p.nose_w * nose_scale * 0.55, nose_bottom, nr, nr * 0.8, [70.0, 55.0, 50.0], None);

    // Mouth.
    let lip = [170.0, 75.0, 75.0];
    if p.mouth_open {
        cv.ellipse(p.cx, p.mouth_y, p.mouth_rx, 4.6, lip, None);
        cv.ellipse(p.cx, p.mouth_y, p.mouth_rx * 0.8, 3.0, [60.0, 30.0, 35.0], None);
        cv.bar(
            p.cx - p.mouth_rx * 0.55,
            p.cx + p.mouth_rx * 0.55,
            p.mouth_y - 2.4,
            p.mouth_y - 1.2,
            [225.0, 225.0, 220.0],
            None,
        );
    } else {
        cv.ellipse(p.cx, p.mouth_y, p.mouth_rx, 1.9, lip, None);
    }

    let mut masks = Vec::new();

    if p.mustache {
        let mut mask = vec![0u8; side * side];
        cv.ellipse(
            p.cx,
            p.mouth_y - 5.5,
            p.mouth_rx * 1.15,
            2.8,
            p.hair.map(|v| v * 0.55),
            Some(&mut mask),
        );
        masks.push((AttrKind::Mustache, mask));
    }
    if p.goatee {
        let mut mask = vec![0u8; side * side];
        cv.ellipse(
            p.cx,
            p.mouth_y + 9.5,
            p.mouth_rx * 0.75,
            5.0,
            p.hair.map(|v| v * 0.55),
            Some(&mut mask),
        );
        masks.push((AttrKind::Goatee, mask));
    }
    if p.eyeglasses {
        let mut mask = vec![0u8; side * side];
        let grx = p.eye_rx + 3.0;
        let gry = p.eye_ry + 3.0;
        for side_sign in [-1.0f32, 1.0] {
            let ex = p.cx + side_sign * p.eye_dx;
            cv.frame(ex, p.eye_y, grx, gry, 0.9, p.glass_color, &mut mask);
        }
        // Bridge and temple arms.
        cv.bar(
            p.cx - p.eye_dx + grx,
            p.cx + p.eye_dx - grx,
            p.eye_y - 1.0,
            p.eye_y,
            p.glass_color,
            Some(&mut mask),
        );
        for side_sign in [-1.0f32, 1.0] {
            let inner = p.cx + side_sign * (p.eye_dx + grx);
            let outer = p.cx + side_sign * p.head_rx;
            let (x0, x1) = if side_sign < 0.0 {
                (outer, inner)
            } else {
                (inner, outer)
            };
            cv.bar(x0, x1, p.eye_y - 1.0, p.eye_y, p.glass_color, Some(&mut mask));
        }
        masks.push((AttrKind::Eyeglasses, mask));
    }

    (cv.into_image(), masks)
}

fn attrs_from_flags(flags: &[(AttrKind, bool)]) -> AttributeVector {
    let mut bits = [0u8; 38];
    for (k, v) in flags {
        bits[k.attr_index()] = *v as u8;
    }
    AttributeVector::from_bits(&bits).expect("fixed length")
}

/// Generates `spec.count` faces in memory, deterministically per seed.
pub fn synth_faces(spec: &SynthSpec) -> Result<Vec<SynthRecord>> {
    if spec.side < 32 {
        return Err(Error::Config(format!(
            "synthetic canvas side must be >= 32, got {}",
            spec.side
        )));
    }
    let mut out = Vec::with_capacity(spec.count);
    for idx in 0..spec.count {
        let mut rng = SeededRng::new(spec.seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let flags: Vec<(AttrKind, bool)> = spec
            .attrs
            .iter()
            .map(|a| (a.kind, rng.uniform01() < a.prob))
            .collect();
        let params = face_params(&mut rng, spec.side, &flags);
        let (image, masks) = draw_face(&params);
        out.push(SynthRecord {
            file: format!("face_{idx:04}.png"),
            image,
            attrs: attrs_from_flags(&flags),
            masks,
            params,
        });
    }
    Ok(out)
}

/// Generates faces and writes images, overlay masks and the attribute CSV
/// under `out_dir` (images/, masks/, attributes.csv).
pub fn synth_face_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let records = synth_faces(spec)?;
    let img_dir = out_dir.join("images");
    let mask_dir = out_dir.join("masks");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(img_dir.display().to_string(), e))?;
    std::fs::create_dir_all(&mask_dir)
        .map_err(|e| Error::io(mask_dir.display().to_string(), e))?;

    let mut manifest = DatasetManifest {
        root: img_dir.clone(),
        split: "synth".into(),
        hr_side: spec.side,
        scale: 4,
        attr_names: attr_names_38(),
        records: Vec::new(),
    };
    for rec in &records {
        super::save_image(&img_dir.join(&rec.file), &rec.image)?;
        for (kind, mask) in &rec.masks {
            let stem = rec.file.trim_end_matches(".png");
            let path = mask_dir.join(format!("{stem}_{}.png", kind.name()));
            super::save_gray_png(&path, spec.side, spec.side, mask)?;
        }
        manifest.records.push(ManifestRecord {
            file: rec.file.clone(),
            attrs: rec.attrs.clone(),
        });
    }
    save_manifest(&manifest, &out_dir.join("attributes.csv"))?;
    Ok(manifest)
}
