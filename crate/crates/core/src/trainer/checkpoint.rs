//! Checkpoint file: magic "AGAC", u32 version, a UTF-8 manifest mapping
//! config keys and tensor names to offsets, then raw little-endian f32 blobs
//! (parameter values plus Adam moments). Reload reproduces eval-mode outputs
//! bitwise.

use std::collections::BTreeMap;
use std::path::Path;

use crate::discriminator::{build_discriminator, DiscConfig, DiscState};
use crate::error::{Error, Result};
use crate::generator::{build_generator, AttrFuse, GeneratorConfig, GeneratorState};
use crate::tensor::{ParamStore, SeededRng};
use crate::unet::{build_unet, UNetConfig, UNetState};

const MAGIC: &[u8; 4] = b"AGAC";
const VERSION: u32 = 1;

struct TensorEntry {
    kind: &'static str,
    offset: usize,
    len: usize,
}

#[derive(Default)]
struct Writer {
    manifest: String,
    blob: Vec<u8>,
}

impl Writer {
    fn put_kv(&mut self, key: &str, value: &str) {
        self.manifest.push_str(&format!("config {key} {value}\n"));
    }

    fn put_blob(&mut self, prefix: &str, name: &str, kind: &str, shape: &[usize], data: &[f32]) {
        let offset = self.blob.len();
        for v in data {
            self.blob.extend_from_slice(&v.to_le_bytes());
        }
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        self.manifest.push_str(&format!(
            "tensor {prefix}/{name} {kind} {offset} {} {}\n",
            data.len(),
            dims.join(" ")
        ));
    }

    fn put_store(&mut self, prefix: &str, store: &ParamStore) {
        self.manifest
            .push_str(&format!("step {prefix} {}\n", store.step()));
        for (name, tensor, m, v) in store.iter() {
            self.put_blob(prefix, name, "value", tensor.shape(), tensor.data());
            self.put_blob(prefix, name, "m", tensor.shape(), m);
            self.put_blob(prefix, name, "v", tensor.shape(), v);
        }
    }
}

fn gen_config_kv(w: &mut Writer, cfg: &GeneratorConfig, seed: u64) {
    w.put_kv("gen.scale", &cfg.scale.to_string());
    w.put_kv("gen.hr_side", &cfg.hr_side.to_string());
    w.put_kv("gen.main_channels", &cfg.main_channels.to_string());
    w.put_kv("gen.attr_channels", &cfg.attr_channels.to_string());
    w.put_kv("gen.rrdb_count", &cfg.rrdb_count.to_string());
    w.put_kv("gen.rrdb_growth", &cfg.rrdb_growth.to_string());
    w.put_kv("gen.aga_module_count", &cfg.aga_module_count.to_string());
    w.put_kv("gen.residual_scale", &format!("{:e}", cfg.residual_scale));
    w.put_kv(
        "gen.attr_fuse",
        match cfg.attr_fuse {
            AttrFuse::ConcatConv => "concat",
            AttrFuse::Additive => "additive",
        },
    );
    w.put_kv("gen.seed", &seed.to_string());
}

fn disc_config_kv(w: &mut Writer, cfg: &DiscConfig, seed: u64) {
    w.put_kv("disc.input_side", &cfg.input_side.to_string());
    w.put_kv("disc.base_channels", &cfg.base_channels.to_string());
    w.put_kv("disc.stage_growth", &cfg.stage_growth.to_string());
    w.put_kv("disc.attr_embed_side", &cfg.attr_embed_side.to_string());
    w.put_kv("disc.seed", &seed.to_string());
}

fn unet_config_kv(w: &mut Writer, cfg: &UNetConfig, seed: u64) {
    w.put_kv("unet.depth", &cfg.depth.to_string());
    w.put_kv("unet.base_channels", &cfg.base_channels.to_string());
    w.put_kv("unet.channel_cap", &cfg.channel_cap.to_string());
    w.put_kv("unet.dropout_p", &format!("{:e}", cfg.dropout_p));
    w.put_kv("unet.se_reduction", &cfg.se_reduction.to_string());
    w.put_kv("unet.input_side", &cfg.input_side.to_string());
    w.put_kv("unet.seed", &seed.to_string());
}

/// Saves any subset of the three model states plus the training RNG position
/// and free-form extra config entries.
pub fn checkpoint_save(
    path: &Path,
    gen: Option<&GeneratorState>,
    disc: Option<&DiscState>,
    unet: Option<&UNetState>,
    rng: &SeededRng,
    extra: &[(String, String)],
) -> Result<()> {
    let mut w = Writer::default();
    w.manifest
        .push_str(&format!("rng {} {}\n", rng.seed(), rng.word_pos()));
    for (k, v) in extra {
        w.put_kv(&format!("extra.{k}"), v);
    }
    if let Some(g) = gen {
        gen_config_kv(&mut w, &g.config, g.seed);
        w.put_store("gen", &g.store);
    }
    if let Some(d) = disc {
        disc_config_kv(&mut w, &d.config, d.seed);
        w.put_store("disc", &d.store);
    }
    if let Some(u) = unet {
        unet_config_kv(&mut w, &u.config, u.seed);
        w.put_store("unet", &u.store);
    }

    let manifest = w.manifest.into_bytes();
    let mut out = Vec::with_capacity(12 + manifest.len() + w.blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&w.blob);
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// States and metadata restored from a checkpoint file.
pub struct LoadedCheckpoint {
    pub gen: Option<GeneratorState>,
    pub disc: Option<DiscState>,
    pub unet: Option<UNetState>,
    pub rng: SeededRng,
    pub extra: BTreeMap<String, String>,
}

struct Parsed {
    config: BTreeMap<String, String>,
    steps: BTreeMap<String, u64>,
    tensors: BTreeMap<String, Vec<TensorEntry>>,
    rng: Option<(u64, u128)>,
    blob: Vec<u8>,
}

fn parse_file(path: &Path) -> Result<Parsed> {
    let bad = |m: String| Error::Data(format!("checkpoint {}: {m}", path.display()));
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing AGAC magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!(
            "format version {version} unsupported (expected {VERSION})"
        )));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + mlen {
        return Err(bad("truncated manifest".into()));
    }
    let manifest = std::str::from_utf8(&bytes[16..16 + mlen])
        .map_err(|_| bad("manifest is not UTF-8".into()))?;
    let blob = bytes[16 + mlen..].to_vec();

    let mut parsed = Parsed {
        config: BTreeMap::new(),
        steps: BTreeMap::new(),
        tensors: BTreeMap::new(),
        rng: None,
        blob,
    };
    for line in manifest.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("config") => {
                let key = parts.next().ok_or_else(|| bad("config line".into()))?;
                let value = parts.collect::<Vec<_>>().join(" ");
                parsed.config.insert(key.to_string(), value);
            }
            Some("rng") => {
                let seed: u64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("rng seed".into()))?;
                let pos: u128 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("rng position".into()))?;
                parsed.rng = Some((seed, pos));
            }
            Some("step") => {
                let prefix = parts.next().ok_or_else(|| bad("step line".into()))?;
                let step: u64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("step value".into()))?;
                parsed.steps.insert(prefix.to_string(), step);
            }
            Some("tensor") => {
                let full = parts.next().ok_or_else(|| bad("tensor name".into()))?;
                let kind = match parts.next() {
                    Some("value") => "value",
                    Some("m") => "m",
                    Some("v") => "v",
                    other => return Err(bad(format!("tensor kind {other:?}"))),
                };
                let offset: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("tensor offset".into()))?;
                let len: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("tensor length".into()))?;
                if offset + len * 4 > parsed.blob.len() {
                    return Err(bad(format!(
                        "tensor {full} ({kind}) blob range {offset}..{} out of bounds",
                        offset + len * 4
                    )));
                }
                parsed
                    .tensors
                    .entry(full.to_string())
                    .or_default()
                    .push(TensorEntry { kind, offset, len });
            }
            Some(other) => return Err(bad(format!("unknown manifest entry '{other}'"))),
            None => {}
        }
    }
    Ok(parsed)
}

fn read_floats(blob: &[u8], e: &TensorEntry) -> Vec<f32> {
    blob[e.offset..e.offset + e.len * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn load_store(parsed: &Parsed, prefix: &str, store: &mut ParamStore, path: &Path) -> Result<()> {
    let bad = |m: String| Error::Data(format!("checkpoint {}: {m}", path.display()));
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        let full = format!("{prefix}/{name}");
        let entries = parsed
            .tensors
            .get(&full)
            .ok_or_else(|| bad(format!("missing parameter '{full}'")))?;
        let find = |kind: &str| entries.iter().find(|e| e.kind == kind);
        let value = find("value").ok_or_else(|| bad(format!("missing value blob for '{full}'")))?;
        let m = find("m").map(|e| read_floats(&parsed.blob, e));
        let v = find("v").map(|e| read_floats(&parsed.blob, e));
        store.load_values(
            name,
            &read_floats(&parsed.blob, value),
            m.as_deref(),
            v.as_deref(),
        )?;
    }
    // Reject checkpoints that carry parameters this architecture lacks.
    for full in parsed.tensors.keys() {
        if let Some(name) = full.strip_prefix(&format!("{prefix}/")) {
            if !store.contains(name) {
                return Err(bad(format!("unknown parameter name '{full}'")));
            }
        }
    }
    if let Some(step) = parsed.steps.get(prefix) {
        store.set_step(*step);
    }
    Ok(())
}

fn cfg_get<'a>(cfg: &'a BTreeMap<String, String>, key: &str, path: &Path) -> Result<&'a str> {
    cfg.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Data(format!("checkpoint {}: missing config {key}", path.display())))
}

fn cfg_parse<T: std::str::FromStr>(
    cfg: &BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<T> {
    cfg_get(cfg, key, path)?
        .parse::<T>()
        .map_err(|_| Error::Data(format!("checkpoint {}: bad config {key}", path.display())))
}

pub fn checkpoint_load(path: &Path) -> Result<LoadedCheckpoint> {
    let parsed = parse_file(path)?;
    let cfg = &parsed.config;

    let gen = if cfg.contains_key("gen.scale") {
        let config = GeneratorConfig {
            scale: cfg_parse(cfg, "gen.scale", path)?,
            hr_side: cfg_parse(cfg, "gen.hr_side", path)?,
            main_channels: cfg_parse(cfg, "gen.main_channels", path)?,
            attr_channels: cfg_parse(cfg, "gen.attr_channels", path)?,
            rrdb_count: cfg_parse(cfg, "gen.rrdb_count", path)?,
            rrdb_growth: cfg_parse(cfg, "gen.rrdb_growth", path)?,
            aga_module_count: cfg_parse(cfg, "gen.aga_module_count", path)?,
            residual_scale: cfg_parse(cfg, "gen.residual_scale", path)?,
            attr_fuse: match cfg_get(cfg, "gen.attr_fuse", path)? {
                "additive" => AttrFuse::Additive,
                _ => AttrFuse::ConcatConv,
            },
        };
        let seed: u64 = cfg_parse(cfg, "gen.seed", path)?;
        let mut state = build_generator(config, seed)?;
        load_store(&parsed, "gen", &mut state.store, path)?;
        Some(state)
    } else {
        None
    };

    let disc = if cfg.contains_key("disc.input_side") {
        let config = DiscConfig {
            input_side: cfg_parse(cfg, "disc.input_side", path)?,
            base_channels: cfg_parse(cfg, "disc.base_channels", path)?,
            stage_growth: cfg_parse(cfg, "disc.stage_growth", path)?,
            attr_embed_side: cfg_parse(cfg, "disc.attr_embed_side", path)?,
        };
        let seed: u64 = cfg_parse(cfg, "disc.seed", path)?;
        let mut state = build_discriminator(config, seed)?;
        load_store(&parsed, "disc", &mut state.store, path)?;
        Some(state)
    } else {
        None
    };

    let unet = if cfg.contains_key("unet.depth") {
        let config = UNetConfig {
            depth: cfg_parse(cfg, "unet.depth", path)?,
            base_channels: cfg_parse(cfg, "unet.base_channels", path)?,
            channel_cap: cfg_parse(cfg, "unet.channel_cap", path)?,
            dropout_p: cfg_parse(cfg, "unet.dropout_p", path)?,
            se_reduction: cfg_parse(cfg, "unet.se_reduction", path)?,
            input_side: cfg_parse(cfg, "unet.input_side", path)?,
        };
        let seed: u64 = cfg_parse(cfg, "unet.seed", path)?;
        let mut state = build_unet(config, seed)?;
        load_store(&parsed, "unet", &mut state.store, path)?;
        Some(state)
    } else {
        None
    };

    let rng = match parsed.rng {
        Some((seed, pos)) => SeededRng::restore(seed, pos),
        None => SeededRng::new(0),
    };
    let extra = parsed
        .config
        .iter()
        .filter_map(|(k, v)| {
            k.strip_prefix("extra.")
                .map(|key| (key.to_string(), v.clone()))
        })
        .collect();
    Ok(LoadedCheckpoint {
        gen,
        disc,
        unet,
        rng,
        extra,
    })
}
