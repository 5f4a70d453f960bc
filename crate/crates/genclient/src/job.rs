//! Generation jobs and the component ablation matrix.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::GenError;

pub const DEFAULT_PROMPT: &str = "white button mushrooms on dark black soil compost mycelium";

/// Placeholder style references for the image-prompt adapter.
pub const STYLE_REFERENCE_PNGS: [(&str, &[u8]); 2] = [
    ("style_ref_1.png", include_bytes!("../assets/style_ref_1.png")),
    ("style_ref_2.png", include_bytes!("../assets/style_ref_2.png")),
];

/// Which optional workflow blocks a job enables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Components {
    pub controlnet: bool,
    pub ip_adapter: bool,
    pub lora1: bool,
    pub lora2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AblationConfig {
    /// Text prompt only.
    Bsd,
    Cnet,
    CnetIp,
    CnetL1,
    CnetL2,
    CnetIpL1,
    CnetIpL2,
    CnetL1L2,
    /// Depth control, image prompt and both LoRAs.
    Full,
}

impl AblationConfig {
    pub const ALL: [AblationConfig; 9] = [
        Self::Bsd,
        Self::Cnet,
        Self::CnetIp,
        Self::CnetL1,
        Self::CnetL2,
        Self::CnetIpL1,
        Self::CnetIpL2,
        Self::CnetL1L2,
        Self::Full,
    ];

    pub fn components(self) -> Components {
        let c = |controlnet, ip_adapter, lora1, lora2| Components {
            controlnet,
            ip_adapter,
            lora1,
            lora2,
        };
        match self {
            Self::Bsd => c(false, false, false, false),
            Self::Cnet => c(true, false, false, false),
            Self::CnetIp => c(true, true, false, false),
            Self::CnetL1 => c(true, false, true, false),
            Self::CnetL2 => c(true, false, false, true),
            Self::CnetIpL1 => c(true, true, true, false),
            Self::CnetIpL2 => c(true, true, false, true),
            Self::CnetL1L2 => c(true, false, true, true),
            Self::Full => c(true, true, true, true),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bsd => "BSD",
            Self::Cnet => "CNET",
            Self::CnetIp => "CNET_IP",
            Self::CnetL1 => "CNET_L1",
            Self::CnetL2 => "CNET_L2",
            Self::CnetIpL1 => "CNET_IP_L1",
            Self::CnetIpL2 => "CNET_IP_L2",
            Self::CnetL1L2 => "CNET_L1_L2",
            Self::Full => "FULL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraSpec {
    pub name: String,
    /// In `[0, 2]`.
    pub weight: f64,
    pub trigger_words: Vec<String>,
}

/// Knobs shared by every job of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationDefaults {
    pub prompt: String,
    pub negative_prompt: String,
    pub control_strength: f64,
    pub ip_adapter_weight: f64,
    /// Image-prompt references; an empty list means the bundled placeholders.
    pub style_references: Vec<String>,
    /// The first and second LoRA.
    pub loras: [LoraSpec; 2],
    pub sampler_steps: u32,
    /// Used when a job has no depth map to take its size from.
    pub output_size: [u32; 2],
}

impl Default for GenerationDefaults {
    fn default() -> Self {
        Self {
            prompt: DEFAULT_PROMPT.into(),
            negative_prompt: String::new(),
            control_strength: 1.0,
            ip_adapter_weight: 0.5,
            style_references: Vec::new(),
            loras: [
                LoraSpec {
                    name: "white_button_mushroom".into(),
                    weight: 1.0,
                    trigger_words: vec!["white button mushroom".into()],
                },
                LoraSpec {
                    name: "compost_mycelium".into(),
                    weight: 1.0,
                    trigger_words: vec!["compost mycelium".into()],
                },
            ],
            sampler_steps: 30,
            output_size: [1024, 1024],
        }
    }
}

/// A depth map on disk and the annotated image it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthRef {
    /// 16-bit control PNG.
    pub path: String,
    /// File name of the annotated image in the COCO set.
    pub source_image: String,
    pub scene_seed: Option<u64>,
    pub origin: Option<[u32; 2]>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobProvenance {
    pub source_image: Option<String>,
    pub scene_seed: Option<u64>,
    pub origin: Option<[u32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    pub image: String,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpAdapterBlock {
    pub reference_images: Vec<String>,
    pub weight: f64,
}

/// The body sent to the generation service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub prompt: String,
    pub negative_prompt: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip_adapter: Option<IpAdapterBlock>,
    pub loras: Vec<LoraSpec>,
    pub output_size: [u32; 2],
    pub sampler_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationJob {
    pub job_id: String,
    pub ablation: AblationConfig,
    pub provenance: JobProvenance,
    pub request: GenerationRequest,
}

fn file_stem(path: &str) -> &str {
    Path::new(path).file_stem().and_then(|s| s.to_str()).unwrap_or(path)
}

pub fn job_id(config: AblationConfig, source: Option<&str>, seed: u64) -> String {
    format!("{}-{}-s{seed}", config.name(), source.map_or("none", file_stem))
}

fn contains_words(prompt: &str, words: &str) -> bool {
    prompt.to_lowercase().contains(&words.to_lowercase())
}

impl GenerationJob {
    /// Checks block presence against the ablation config, parameter ranges
    /// and that every active LoRA's trigger words appear in the prompt.
    pub fn validate(&self) -> Result<(), GenError> {
        let c = self.ablation.components();
        let r = &self.request;
        let err = |m: String| Err(GenError::Validation(format!("{}: {m}", self.job_id)));
        if c.controlnet != r.control.is_some() {
            return err(format!("control block must be present iff {} uses depth control", self.ablation));
        }
        if c.ip_adapter != r.ip_adapter.is_some() {
            return err(format!("image-prompt block must be present iff {} uses it", self.ablation));
        }
        if let Some(ctl) = &r.control {
            if !(0.0..=1.0).contains(&ctl.strength) {
                return err(format!("control strength {} outside [0, 1]", ctl.strength));
            }
        }
        if let Some(ip) = &r.ip_adapter {
            if !(0.0..=1.0).contains(&ip.weight) {
                return err(format!("image-prompt weight {} outside [0, 1]", ip.weight));
            }
            if ip.reference_images.is_empty() {
                return err("image-prompt block without references".into());
            }
        }
        let expected = usize::from(c.lora1) + usize::from(c.lora2);
        if r.loras.len() != expected {
            return err(format!("{} LoRAs for {}", r.loras.len(), self.ablation));
        }
        for l in &r.loras {
            if !(0.0..=2.0).contains(&l.weight) {
                return err(format!("LoRA {} weight {} outside [0, 2]", l.name, l.weight));
            }
            if let Some(w) = l.trigger_words.iter().find(|w| !contains_words(&r.prompt, w)) {
                return err(format!("prompt lacks trigger words {w:?} of LoRA {}", l.name));
            }
        }
        if r.output_size[0] == 0 || r.output_size[1] == 0 || r.sampler_steps == 0 {
            return err("output size and sampler steps must be positive".into());
        }
        Ok(())
    }
}

pub fn build_job(
    depth: Option<&DepthRef>,
    config: AblationConfig,
    seed: u64,
    prompt_override: Option<&str>,
    defaults: &GenerationDefaults,
) -> Result<GenerationJob, GenError> {
    let c = config.components();
    if c.controlnet && depth.is_none() {
        return Err(GenError::Validation(format!("{config} needs a depth map")));
    }
    let style_refs = if defaults.style_references.is_empty() {
        STYLE_REFERENCE_PNGS.iter().map(|(n, _)| n.to_string()).collect()
    } else {
        defaults.style_references.clone()
    };
    let mut loras = Vec::new();
    if c.lora1 {
        loras.push(defaults.loras[0].clone());
    }
    if c.lora2 {
        loras.push(defaults.loras[1].clone());
    }
    let job = GenerationJob {
        job_id: job_id(config, depth.map(|d| d.source_image.as_str()), seed),
        ablation: config,
        provenance: JobProvenance {
            source_image: depth.map(|d| d.source_image.clone()),
            scene_seed: depth.and_then(|d| d.scene_seed),
            origin: depth.and_then(|d| d.origin),
        },
        request: GenerationRequest {
            prompt: prompt_override.unwrap_or(&defaults.prompt).to_string(),
            negative_prompt: defaults.negative_prompt.clone(),
            seed,
            control: c
                .controlnet
                .then(|| depth.map(|d| ControlBlock { image: d.path.clone(), strength: defaults.control_strength }))
                .flatten(),
            ip_adapter: c.ip_adapter.then(|| IpAdapterBlock {
                reference_images: style_refs,
                weight: defaults.ip_adapter_weight,
            }),
            loras,
            output_size: depth.map_or(defaults.output_size, |d| [d.width, d.height]),
            sampler_steps: defaults.sampler_steps,
        },
    };
    job.validate()?;
    Ok(job)
}

/// One job per `(depth, seed)` pair and config. Pairs share prompts and
/// seeds across configs, so two jobs of the same pair differ only in the
/// blocks their configs toggle.
pub fn build_ablation_batch(
    depths: &[DepthRef],
    seeds: &[u64],
    configs: &[AblationConfig],
    defaults: &GenerationDefaults,
) -> Result<Vec<GenerationJob>, GenError> {
    if depths.len() != seeds.len() {
        return Err(GenError::Validation(format!("{} depth maps for {} seeds", depths.len(), seeds.len())));
    }
    let mut jobs = Vec::with_capacity(depths.len() * configs.len());
    for &config in configs {
        for (d, &s) in depths.iter().zip(seeds) {
            jobs.push(build_job(Some(d), config, s, None, defaults)?);
        }
    }
    let mut ids = HashSet::new();
    if let Some(j) = jobs.iter().find(|j| !ids.insert(j.job_id.as_str())) {
        return Err(GenError::Validation(format!("duplicate job id {}", j.job_id)));
    }
    Ok(jobs)
}
