//! Image generation plugin with a deterministic placeholder backend.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};

use base64::Engine as _;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::action::{ActionDef, HandlerOptions};
use crate::hashing::stable_hash64;
use crate::kernel::AgentRuntime;
use crate::memory::{tokenize, Attachment, Content};
use crate::plugin::PluginDef;

pub const IMAGE_DIR: &str = "generatedImages";
pub const SUCCESS_TEXT: &str = "Image generated successfully";
/// Any one of these settings enables image generation.
pub const GENERATOR_KEYS: [&str; 5] = [
    "ANTHROPIC_API_KEY",
    "OPENAI_API_KEY",
    "TOGETHER_API_KEY",
    "HEURIST_API_KEY",
    "FAL_API_KEY",
];

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("no image generator configured")]
    NoProviderConfigured,
    #[error("invalid image options: {0}")]
    InvalidOptions(String),
    #[error("invalid base64 image data: {0}")]
    InvalidBase64(String),
    #[error("failed to write image: {0}")]
    WriteFailure(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ImageOptions {
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub count: Option<u32>,
    pub negative_prompt: Option<String>,
    pub num_iterations: Option<u32>,
    pub guidance_scale: Option<f64>,
    pub seed: Option<u64>,
    pub model_id: Option<String>,
    pub style_preset: Option<String>,
    pub hide_watermark: Option<bool>,
}

impl ImageOptions {
    pub fn width(&self) -> u32 {
        self.width.unwrap_or(512)
    }

    pub fn height(&self) -> u32 {
        self.height.unwrap_or(512)
    }

    pub fn count(&self) -> u32 {
        self.count.unwrap_or(1)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), MediaError> {
        for (field, v) in [("width", self.width), ("height", self.height)] {
            if let Some(v) = v {
                if !(16..=4096).contains(&v) {
                    return Err(MediaError::InvalidOptions(format!("{field} {v} outside [16, 4096]")));
                }
            }
        }
        if !(1..=8).contains(&self.count()) {
            return Err(MediaError::InvalidOptions(format!("count {} outside [1, 8]", self.count())));
        }
        Ok(())
    }

    /// Reads `width`, `height`, `count` and `seed` from handler options,
    /// falling back to `IMAGE_*` settings.
    pub fn from_sources(options: &HandlerOptions, setting: impl Fn(&str) -> Option<String>) -> Self {
        let read = |key: &str, setting_key: &str| {
            options
                .get(key)
                .cloned()
                .or_else(|| setting(setting_key))
                .and_then(|v| v.trim().parse::<u64>().ok())
        };
        let small = |v: Option<u64>| v.map(|v| u32::try_from(v).unwrap_or(u32::MAX));
        Self {
            width: small(read("width", "IMAGE_WIDTH")),
            height: small(read("height", "IMAGE_HEIGHT")),
            count: small(read("count", "IMAGE_COUNT")),
            seed: read("seed", "IMAGE_SEED"),
            ..Self::default()
        }
    }
}

/// True when any generator key is set or `PLACEHOLDER_GEN=1`.
pub fn image_gen_configured(setting: impl Fn(&str) -> Option<String>) -> bool {
    GENERATOR_KEYS
        .iter()
        .any(|k| setting(k).is_some_and(|v| !v.is_empty()))
        || setting("PLACEHOLDER_GEN").as_deref() == Some("1")
}

/// Backend seam; only the placeholder is implemented.
pub trait ImageGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str, options: &ImageOptions) -> Result<Vec<u8>, MediaError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PlaceholderGenerator;

impl ImageGenerator for PlaceholderGenerator {
    fn name(&self) -> &str {
        "placeholder"
    }

    fn generate(&self, prompt: &str, options: &ImageOptions) -> Result<Vec<u8>, MediaError> {
        generate_placeholder(prompt, options)
    }
}

/// Solid PNG whose color comes from a hash of prompt and seed. The first
/// four pixels carry the remaining hash bytes as a tag.
pub fn generate_placeholder(prompt: &str, options: &ImageOptions) -> Result<Vec<u8>, MediaError> {
    options.validate()?;
    let (w, h) = (options.width(), options.height());
    let mut key = prompt.as_bytes().to_vec();
    key.extend_from_slice(&options.seed().to_le_bytes());
    let hash = stable_hash64(&key).to_be_bytes();
    let fill = [hash[0], hash[1], hash[2]];
    let tag = [hash[3], hash[4], hash[5], hash[6]];

    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    for _ in 0..(w as usize * h as usize) {
        pixels.extend_from_slice(&fill);
    }
    for (i, byte) in tag.iter().enumerate() {
        pixels[i * 3..i * 3 + 3].copy_from_slice(&[*byte, *byte, *byte]);
    }

    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, w, h);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| MediaError::WriteFailure(e.to_string()))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| MediaError::WriteFailure(e.to_string()))?;
    writer
        .finish()
        .map_err(|e| MediaError::WriteFailure(e.to_string()))?;
    Ok(out)
}

/// Keeps `[A-Za-z0-9_-]`, replacing anything else with `_`.
pub fn sanitize_filename(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        "image".into()
    } else {
        cleaned
    }
}

static DATA_URI: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^data:image/\w+;base64,").unwrap());

/// Decodes `base64_data` into `<root>/generatedImages/<filename>.png` and
/// returns the absolute path.
pub fn save_base64_image_in(root: &Path, base64_data: &str, filename: &str) -> Result<PathBuf, MediaError> {
    let payload = DATA_URI.replace(base64_data.trim(), "");
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(payload.as_bytes())
        .map_err(|e| MediaError::InvalidBase64(e.to_string()))?;
    write_image(root, &bytes, filename)
}

/// [`save_base64_image_in`] rooted at the working directory.
pub fn save_base64_image(base64_data: &str, filename: &str) -> Result<PathBuf, MediaError> {
    let cwd = std::env::current_dir().map_err(|e| MediaError::WriteFailure(e.to_string()))?;
    save_base64_image_in(&cwd, base64_data, filename)
}

fn write_image(root: &Path, bytes: &[u8], filename: &str) -> Result<PathBuf, MediaError> {
    let fail = |e: std::io::Error| MediaError::WriteFailure(e.to_string());
    let dir = root.join(IMAGE_DIR);
    std::fs::create_dir_all(&dir).map_err(fail)?;
    let dir = dir.canonicalize().map_err(fail)?;
    let path = dir.join(format!("{}.png", sanitize_filename(filename)));
    let tmp = dir.join(format!(".{}.tmp", sanitize_filename(filename)));
    let mut file = std::fs::File::create(&tmp).map_err(fail)?;
    file.write_all(bytes).map_err(fail)?;
    file.sync_all().map_err(fail)?;
    std::fs::rename(&tmp, &path).map_err(fail)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileAttachment {
    pub attachment: String,
    pub name: String,
}

/// Reply and file list for one saved image. The attachment id is derived
/// from the path so replays are stable.
pub fn handle_image_response(filepath: &str, filename: &str) -> (Content, Vec<FileAttachment>) {
    let attachment = Attachment {
        id: Uuid::new_v5(&Uuid::NAMESPACE_URL, filepath.as_bytes()).to_string(),
        url: filepath.to_owned(),
        title: "Generated image".into(),
        source: "imageGeneration".into(),
        description: "AI-generated image".into(),
        content_type: "image/png".into(),
    };
    let mut reply = Content::text(SUCCESS_TEXT);
    reply.attachments.push(attachment);
    let files = vec![FileAttachment {
        attachment: filepath.to_owned(),
        name: format!("{filename}.png"),
    }];
    (reply, files)
}

const SIMILES: [&str; 4] = ["IMAGE_GENERATION", "MAKE_A", "CREATE_IMAGE", "DRAW"];
const FILLER: [&str; 8] = ["generate", "image", "picture", "please", "me", "an", "of", "the"];

/// Message text without trigger words.
pub fn extract_prompt(text: &str) -> String {
    let triggers: Vec<String> = SIMILES
        .iter()
        .chain(&["GENERATE_IMAGE"])
        .flat_map(|s| tokenize(s))
        .chain(FILLER.iter().map(|s| (*s).to_owned()))
        .collect();
    let kept: Vec<String> = tokenize(text)
        .into_iter()
        .filter(|t| !triggers.contains(t))
        .collect();
    if kept.is_empty() {
        tokenize(text).join(" ")
    } else {
        kept.join(" ")
    }
}

/// Generates, saves and describes `options.count()` images under `root`.
pub fn generate_images(
    generator: &dyn ImageGenerator,
    root: &Path,
    prompt: &str,
    options: &ImageOptions,
) -> Result<Content, MediaError> {
    options.validate()?;
    let mut reply = Content::text(SUCCESS_TEXT);
    let stem: String = sanitize_filename(&prompt.replace(' ', "-")).chars().take(32).collect();
    for i in 0..options.count() {
        let opts = ImageOptions {
            seed: Some(options.seed().wrapping_add(u64::from(i))),
            ..options.clone()
        };
        let bytes = generator.generate(prompt, &opts)?;
        let filename = format!("{stem}-{:016x}", stable_hash64(&bytes));
        let path = write_image(root, &bytes, &filename)?;
        let (one, _) = handle_image_response(&path.to_string_lossy(), &filename);
        reply.attachments.extend(one.attachments);
    }
    Ok(reply)
}

fn media_root(runtime: &AgentRuntime) -> PathBuf {
    runtime
        .get_setting("MEDIA_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::current_dir().unwrap_or_else(|_| PathBuf::from(".")))
}

pub fn generate_image_action(generator: Arc<dyn ImageGenerator>) -> ActionDef {
    ActionDef::new("GENERATE_IMAGE", "Generate an image to go along with the message.")
        .with_similes(SIMILES)
        .with_validate(|rt, _| image_gen_configured(|k| rt.get_setting(k)))
        .with_handler(move |rt, message, _state, options, callback| {
            let opts = ImageOptions::from_sources(options, |k| rt.get_setting(k));
            let prompt = extract_prompt(message.text());
            match generate_images(generator.as_ref(), &media_root(rt), &prompt, &opts) {
                Ok(reply) => {
                    callback(reply);
                    true
                }
                Err(e) => {
                    callback(Content::text(format!("Image generation failed: {e}")));
                    false
                }
            }
        })
}

pub fn image_generation_plugin() -> PluginDef {
    PluginDef::new("imageGeneration", "Generate images")
        .with_action(generate_image_action(Arc::new(PlaceholderGenerator)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn placeholder_is_deterministic_png() {
        let o = ImageOptions::default();
        let a = generate_placeholder("red square", &o).unwrap();
        assert_eq!(a, generate_placeholder("red square", &o).unwrap());
        assert_eq!(&a[..4], &[0x89, 0x50, 0x4E, 0x47]);
        let decoder = png::Decoder::new(std::io::Cursor::new(&a));
        let reader = decoder.read_info().unwrap();
        assert_eq!((reader.info().width, reader.info().height), (512, 512));
    }

    #[test]
    fn seeds_change_fill() {
        let mut fills = HashSet::new();
        for seed in 0..100u64 {
            let mut key = b"red square".to_vec();
            key.extend_from_slice(&seed.to_le_bytes());
            let h = stable_hash64(&key).to_be_bytes();
            fills.insert([h[0], h[1], h[2]]);
        }
        assert_eq!(fills.len(), 100);
    }

    #[test]
    fn options_are_bounded() {
        let bad = |o: ImageOptions| o.validate().is_err();
        assert!(bad(ImageOptions { width: Some(8), ..Default::default() }));
        assert!(bad(ImageOptions { height: Some(5000), ..Default::default() }));
        assert!(bad(ImageOptions { count: Some(0), ..Default::default() }));
        assert!(bad(ImageOptions { count: Some(9), ..Default::default() }));
        assert!(!bad(ImageOptions { width: Some(16), count: Some(8), ..Default::default() }));
    }

    #[test]
    fn configured_by_any_key_or_placeholder() {
        assert!(!image_gen_configured(|_| None));
        assert!(image_gen_configured(|k| (k == "FAL_API_KEY").then(|| "k".into())));
        assert!(!image_gen_configured(|k| (k == "FAL_API_KEY").then(String::new)));
        assert!(image_gen_configured(|k| (k == "PLACEHOLDER_GEN").then(|| "1".into())));
    }

    #[test]
    fn base64_save_strips_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let payload = b"\x89PNGpayload";
        let encoded = base64::engine::general_purpose::STANDARD.encode(payload);
        let path = save_base64_image_in(dir.path(), &format!("data:image/png;base64,{encoded}"), "a").unwrap();
        assert!(path.is_absolute());
        assert!(path.ends_with("generatedImages/a.png"));
        assert_eq!(std::fs::read(&path).unwrap(), payload);
        assert!(matches!(
            save_base64_image_in(dir.path(), "!!notbase64", "b"),
            Err(MediaError::InvalidBase64(_))
        ));
        assert!(!dir.path().join(IMAGE_DIR).join("b.png").exists());
    }

    #[test]
    fn filenames_cannot_escape() {
        let dir = tempfile::tempdir().unwrap();
        let path = save_base64_image_in(dir.path(), "AAAA", "../../etc/x").unwrap();
        assert_eq!(path.parent().unwrap(), dir.path().join(IMAGE_DIR).canonicalize().unwrap());
        assert_eq!(sanitize_filename("a b/c.d"), "a_b_c_d");
    }

    #[test]
    fn response_shape() {
        let (reply, files) = handle_image_response("/tmp/x.png", "a");
        assert_eq!(reply.text, SUCCESS_TEXT);
        assert_eq!(reply.attachments.len(), 1);
        assert_eq!(reply.attachments[0].source, "imageGeneration");
        assert_eq!(reply.attachments[0].content_type, "image/png");
        assert_eq!(files[0].name, "a.png");
    }

    #[test]
    fn count_writes_that_many_files() {
        let dir = tempfile::tempdir().unwrap();
        let o = ImageOptions { count: Some(3), width: Some(32), height: Some(32), ..Default::default() };
        let reply = generate_images(&PlaceholderGenerator, dir.path(), "red square", &o).unwrap();
        assert_eq!(reply.attachments.len(), 3);
        assert_eq!(std::fs::read_dir(dir.path().join(IMAGE_DIR)).unwrap().count(), 3);
    }

    #[test]
    fn prompt_drops_triggers() {
        assert_eq!(extract_prompt("Draw a red square"), "red square");
        assert_eq!(extract_prompt("generate an image of a cat"), "cat");
        assert_eq!(extract_prompt("draw"), "draw");
    }
}
