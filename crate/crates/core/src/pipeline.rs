//! Seeded, declarative composition of augmentations over a dataset.
//!
//! Each spec fires independently per sample with its configured
//! probability (RandomCrop always fires; its randomness lives in the
//! window), using a stream derived from `(seed, sample_id, spec_index)`.
//! Samples are processed in parallel and the result is byte-identical
//! for any worker count. Ineligible mixers pass the sample through
//! unchanged and are logged.

use crate::dataset_io::{Dataset, Sample};
use crate::imageops::{
    blur, equalize, flip, jpeg_degrade, random_crop, rotate, FlipAxis, RightAngle, RotationMode,
};
use crate::mixers::{bbox_mixup, class_cutmix, cutmix, mixup, MixerError, MixerParams};
use crate::rng::RngStream;
use rayon::prelude::*;
use serde::Deserialize;
use std::collections::HashSet;
use thiserror::Error;

pub use crate::rng::derive_stream;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("mixer specs require a dataset with at least 2 samples, got {0}")]
    PoolTooSmall(usize),
    #[error("sample '{0}' carries no decoded pixels; load the dataset with images")]
    MissingPixels(String),
    #[error(transparent)]
    Mixer(#[from] MixerError),
    #[error(transparent)]
    ImageOp(#[from] crate::imageops::ImageOpError),
}

/// Reference to a class by catalog name or COCO category id; resolved
/// against the dataset when the pipeline runs.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassRef {
    Id(u64),
    Name(String),
}

impl ClassRef {
    fn resolve(&self, dataset: &Dataset) -> Result<usize, PipelineError> {
        match self {
            ClassRef::Id(id) => dataset
                .classes
                .index_of_id(*id)
                .ok_or_else(|| PipelineError::Config(format!("unknown category id {id}"))),
            ClassRef::Name(name) => dataset
                .classes
                .index_of_name(name)
                .ok_or_else(|| PipelineError::Config(format!("unknown class name '{name}'"))),
        }
    }
}

/// One augmentation step. `probability` is the chance the step fires per
/// sample; RandomCrop ignores it and always fires.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentSpec {
    RandomFlip {
        probability: f64,
        axes: Vec<FlipAxis>,
    },
    RandomCrop {
        min_frac: f64,
        max_frac: f64,
    },
    Rotate {
        probability: f64,
        mode: RotationMode,
    },
    Blur {
        probability: f64,
        sigma_range: (f64, f64),
    },
    Equalise {
        probability: f64,
    },
    Jpeg {
        probability: f64,
        quality: u8,
    },
    MixUp {
        probability: f64,
        lambda: f64,
    },
    BboxMixUp {
        probability: f64,
        lambda: f64,
        isolation_threshold: f64,
        target_class: Option<ClassRef>,
    },
    CutMix {
        probability: f64,
        mask_proportion: f64,
        isolation_threshold: f64,
    },
    ClassCutMix {
        probability: f64,
        mask_proportion: f64,
        isolation_threshold: f64,
        class_pair: (ClassRef, ClassRef),
    },
}

impl AugmentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            AugmentSpec::RandomFlip { .. } => "RandomFlip",
            AugmentSpec::RandomCrop { .. } => "RandomCrop",
            AugmentSpec::Rotate { .. } => "Rotate",
            AugmentSpec::Blur { .. } => "Blur",
            AugmentSpec::Equalise { .. } => "Equalise",
            AugmentSpec::Jpeg { .. } => "JPEG",
            AugmentSpec::MixUp { .. } => "MixUp",
            AugmentSpec::BboxMixUp { .. } => "BboxMixUp",
            AugmentSpec::CutMix { .. } => "CutMix",
            AugmentSpec::ClassCutMix { .. } => "ClassCutMix",
        }
    }

    pub fn is_mixer(&self) -> bool {
        matches!(
            self,
            AugmentSpec::MixUp { .. }
                | AugmentSpec::BboxMixUp { .. }
                | AugmentSpec::CutMix { .. }
                | AugmentSpec::ClassCutMix { .. }
        )
    }

    fn probability(&self) -> f64 {
        match self {
            AugmentSpec::RandomFlip { probability, .. }
            | AugmentSpec::Rotate { probability, .. }
            | AugmentSpec::Blur { probability, .. }
            | AugmentSpec::Equalise { probability }
            | AugmentSpec::Jpeg { probability, .. }
            | AugmentSpec::MixUp { probability, .. }
            | AugmentSpec::BboxMixUp { probability, .. }
            | AugmentSpec::CutMix { probability, .. }
            | AugmentSpec::ClassCutMix { probability, .. } => *probability,
            AugmentSpec::RandomCrop { .. } => 1.0,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let p = self.probability();
        if !(0.0..=1.0).contains(&p) {
            return Err(format!(
                "{}: probability must be in [0, 1], got {p}",
                self.kind()
            ));
        }
        match self {
            AugmentSpec::RandomFlip { axes, .. } if axes.is_empty() => {
                Err("RandomFlip: axes must be non-empty".into())
            }
            AugmentSpec::RandomCrop { min_frac, max_frac } => {
                if *min_frac > 0.0 && min_frac <= max_frac && *max_frac <= 1.0 {
                    Ok(())
                } else {
                    Err(format!("RandomCrop: need 0 < min_frac <= max_frac <= 1, got {min_frac}..{max_frac}"))
                }
            }
            AugmentSpec::Rotate {
                mode: RotationMode::RightAngles(angles),
                ..
            } if angles.is_empty() => Err("Rotate: angle set must be non-empty".into()),
            AugmentSpec::Blur {
                sigma_range: (lo, hi),
                ..
            } => {
                if *lo > 0.0 && lo <= hi {
                    Ok(())
                } else {
                    Err(format!("Blur: need 0 < lo <= hi, got {lo}..{hi}"))
                }
            }
            AugmentSpec::Jpeg { quality, .. } => {
                if (1..=100).contains(quality) {
                    Ok(())
                } else {
                    Err(format!("JPEG: quality must be 1..=100, got {quality}"))
                }
            }
            AugmentSpec::MixUp { lambda, .. } | AugmentSpec::BboxMixUp { lambda, .. } => {
                if (0.0..=1.0).contains(lambda) {
                    Ok(())
                } else {
                    Err(format!(
                        "{}: lambda must be in [0, 1], got {lambda}",
                        self.kind()
                    ))
                }
            }
            AugmentSpec::CutMix {
                mask_proportion,
                isolation_threshold,
                ..
            }
            | AugmentSpec::ClassCutMix {
                mask_proportion,
                isolation_threshold,
                ..
            } => {
                if !(*mask_proportion > 0.0 && *mask_proportion <= 1.0) {
                    Err(format!(
                        "{}: mask_proportion must be in (0, 1], got {mask_proportion}",
                        self.kind()
                    ))
                } else if !(0.0..=1.0).contains(isolation_threshold) {
                    Err(format!(
                        "{}: isolation_threshold must be in [0, 1], got {isolation_threshold}",
                        self.kind()
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// One output sample per input.
    Transform,
    /// Originals plus one transformed copy per input (`<id>_aug`).
    Extend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub specs: Vec<AugmentSpec>,
    pub output_mode: OutputMode,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.specs.is_empty() {
            return Err(PipelineError::Config("specs must be non-empty".into()));
        }
        for spec in &self.specs {
            spec.validate().map_err(PipelineError::Config)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Declarative TOML config

/// Parsed config file; `seed` may still be absent until resolved against
/// a command-line override (wall-clock defaults are never used).
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub seed: Option<u64>,
    pub specs: Vec<AugmentSpec>,
    pub output_mode: OutputMode,
}

impl ParsedConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| PipelineError::Config(format!("TOML parse error: {e}")))?;
        let output_mode = match raw.output_mode.as_deref() {
            None | Some("transform") => OutputMode::Transform,
            Some("extend") => OutputMode::Extend,
            Some(other) => {
                return Err(PipelineError::Config(format!(
                    "output_mode must be 'transform' or 'extend', got '{other}'"
                )))
            }
        };
        let specs = raw
            .specs
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.into_spec()
                    .map_err(|e| PipelineError::Config(format!("specs[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            seed: raw.seed,
            specs,
            output_mode,
        })
    }

    /// Apply a seed override and produce the final config.
    pub fn resolve(self, seed_override: Option<u64>) -> Result<PipelineConfig, PipelineError> {
        let seed = seed_override.or(self.seed).ok_or_else(|| {
            PipelineError::Config("a seed is required (config `seed = ...` or --seed)".into())
        })?;
        let config = PipelineConfig {
            seed,
            specs: self.specs,
            output_mode: self.output_mode,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_mode: Option<String>,
    #[serde(default)]
    specs: Vec<RawSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: String,
    probability: Option<f64>,
    axes: Option<Vec<String>>,
    min_frac: Option<f64>,
    max_frac: Option<f64>,
    angles: Option<Vec<u16>>,
    arbitrary_degrees: Option<[f64; 2]>,
    sigma_range: Option<[f64; 2]>,
    quality: Option<u8>,
    lambda: Option<f64>,
    mask_proportion: Option<f64>,
    isolation_threshold: Option<f64>,
    target_class: Option<toml::Value>,
    class_pair: Option<[toml::Value; 2]>,
}

fn class_ref(value: &toml::Value) -> Result<ClassRef, String> {
    match value {
        toml::Value::Integer(id) if *id >= 0 => Ok(ClassRef::Id(*id as u64)),
        toml::Value::String(name) => Ok(ClassRef::Name(name.clone())),
        other => Err(format!(
            "class reference must be a name or category id, got {other}"
        )),
    }
}

impl RawSpec {
    fn into_spec(self) -> Result<AugmentSpec, String> {
        let probability = self.probability.unwrap_or(0.5);
        let spec = match self.kind.as_str() {
            "RandomFlip" => {
                let axes = match self.axes {
                    None => vec![FlipAxis::Horizontal, FlipAxis::Vertical],
                    Some(names) => names
                        .iter()
                        .map(|n| match n.as_str() {
                            "horizontal" => Ok(FlipAxis::Horizontal),
                            "vertical" => Ok(FlipAxis::Vertical),
                            other => Err(format!("unknown flip axis '{other}'")),
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                };
                AugmentSpec::RandomFlip { probability, axes }
            }
            "RandomCrop" => AugmentSpec::RandomCrop {
                min_frac: self.min_frac.unwrap_or(0.75),
                max_frac: self.max_frac.unwrap_or(1.0),
            },
            "Rotate" => {
                let mode = match (self.angles, self.arbitrary_degrees) {
                    (Some(_), Some(_)) => {
                        return Err(
                            "Rotate: give either angles or arbitrary_degrees, not both".into()
                        )
                    }
                    (None, None) => RotationMode::default(),
                    (Some(degrees), None) => {
                        let angles = degrees
                            .iter()
                            .map(|&d| {
                                RightAngle::from_degrees(d)
                                    .ok_or_else(|| format!("Rotate: angle {d} is not 90/180/270"))
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        RotationMode::RightAngles(angles)
                    }
                    (None, Some([min_deg, max_deg])) => {
                        RotationMode::ArbitraryDegrees { min_deg, max_deg }
                    }
                };
                AugmentSpec::Rotate { probability, mode }
            }
            "Blur" => {
                let [lo, hi] = self.sigma_range.unwrap_or([0.5, 1.5]);
                AugmentSpec::Blur {
                    probability,
                    sigma_range: (lo, hi),
                }
            }
            "Equalise" => AugmentSpec::Equalise { probability },
            "JPEG" => AugmentSpec::Jpeg {
                probability,
                quality: self.quality.unwrap_or(10),
            },
            "MixUp" => AugmentSpec::MixUp {
                probability,
                lambda: self.lambda.unwrap_or(0.5),
            },
            "BboxMixUp" => AugmentSpec::BboxMixUp {
                probability,
                lambda: self.lambda.unwrap_or(0.5),
                isolation_threshold: self.isolation_threshold.unwrap_or(0.3),
                target_class: self.target_class.as_ref().map(class_ref).transpose()?,
            },
            "CutMix" => AugmentSpec::CutMix {
                probability,
                mask_proportion: self.mask_proportion.unwrap_or(0.5),
                isolation_threshold: self.isolation_threshold.unwrap_or(0.3),
            },
            "ClassCutMix" => {
                let pair = self
                    .class_pair
                    .ok_or("ClassCutMix: class_pair is required")?;
                AugmentSpec::ClassCutMix {
                    probability,
                    mask_proportion: self.mask_proportion.unwrap_or(0.5),
                    isolation_threshold: self.isolation_threshold.unwrap_or(0.3),
                    class_pair: (class_ref(&pair[0])?, class_ref(&pair[1])?),
                }
            }
            other => return Err(format!("unknown augmentation kind '{other}'")),
        };
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// Execution

/// What happened at one spec for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecEvent {
    pub spec_index: u32,
    pub kind: &'static str,
    pub fired: bool,
    /// Set when a mixer fired but was ineligible and passed through.
    pub note: Option<String>,
    pub draws: u64,
}

/// Provenance of one output sample.
#[derive(Debug, Clone)]
pub struct SampleProvenance {
    pub output_id: String,
    /// The input sample plus any mix partners, in use order.
    pub source_ids: Vec<String>,
    pub events: Vec<SpecEvent>,
}

impl SampleProvenance {
    pub fn total_draws(&self) -> u64 {
        self.events.iter().map(|e| e.draws).sum()
    }
}

/// An executed pipeline: the output dataset plus per-sample provenance.
#[derive(Debug)]
pub struct PipelineRun {
    pub dataset: Dataset,
    pub provenance: Vec<SampleProvenance>,
}

impl PipelineRun {
    /// Number of samples where the spec at `spec_index` fired.
    pub fn fired_count(&self, spec_index: u32) -> usize {
        self.provenance
            .iter()
            .filter(|p| {
                p.events
                    .iter()
                    .any(|e| e.spec_index == spec_index && e.fired)
            })
            .count()
    }
}

/// Mixer specs resolved against the dataset catalog.
enum CompiledSpec<'a> {
    Plain(&'a AugmentSpec),
    BboxMixUp {
        probability: f64,
        params: MixerParams,
        target_class: Option<usize>,
    },
    ClassCutMix {
        probability: f64,
        params: MixerParams,
    },
}

fn compile_specs<'a>(
    specs: &'a [AugmentSpec],
    dataset: &Dataset,
) -> Result<Vec<CompiledSpec<'a>>, PipelineError> {
    specs
        .iter()
        .map(|spec| {
            Ok(match spec {
                AugmentSpec::BboxMixUp {
                    probability,
                    lambda,
                    isolation_threshold,
                    target_class,
                } => CompiledSpec::BboxMixUp {
                    probability: *probability,
                    params: MixerParams {
                        lambda: *lambda,
                        isolation_threshold: *isolation_threshold,
                        ..Default::default()
                    },
                    target_class: target_class
                        .as_ref()
                        .map(|c| c.resolve(dataset))
                        .transpose()?,
                },
                AugmentSpec::ClassCutMix {
                    probability,
                    mask_proportion,
                    isolation_threshold,
                    class_pair,
                } => CompiledSpec::ClassCutMix {
                    probability: *probability,
                    params: MixerParams {
                        mask_proportion: *mask_proportion,
                        isolation_threshold: *isolation_threshold,
                        class_pair: Some((
                            class_pair.0.resolve(dataset)?,
                            class_pair.1.resolve(dataset)?,
                        )),
                        ..Default::default()
                    },
                },
                other => CompiledSpec::Plain(other),
            })
        })
        .collect()
}

/// Run the configured specs over every sample.
///
/// The input dataset is the read-only partner pool for mixers; partners
/// are drawn uniformly from it excluding the sample itself. Output is
/// independent of worker count and scheduling.
pub fn apply_pipeline(
    config: &PipelineConfig,
    dataset: &Dataset,
) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    if config.specs.iter().any(|s| s.is_mixer()) && dataset.len() < 2 {
        return Err(PipelineError::PoolTooSmall(dataset.len()));
    }
    for sample in &dataset.samples {
        if sample.image.is_none() {
            return Err(PipelineError::MissingPixels(sample.id.clone()));
        }
    }
    let compiled = compile_specs(&config.specs, dataset)?;

    let results: Vec<Result<(Sample, SampleProvenance), PipelineError>> = dataset
        .samples
        .par_iter()
        .enumerate()
        .map(|(index, sample)| process_sample(config, &compiled, dataset, index, sample))
        .collect();

    let mut outputs = Vec::with_capacity(dataset.len() * 2);
    let mut provenance = Vec::with_capacity(dataset.len());
    let mut taken: HashSet<String> = match config.output_mode {
        OutputMode::Extend => dataset.samples.iter().map(|s| s.id.clone()).collect(),
        OutputMode::Transform => HashSet::new(),
    };
    for (original, result) in dataset.samples.iter().zip(results) {
        let (mut transformed, mut record) = result?;
        if config.output_mode == OutputMode::Extend {
            let mut candidate = format!("{}_aug", original.id);
            let mut suffix = 1;
            while !taken.insert(candidate.clone()) {
                suffix += 1;
                candidate = format!("{}_aug{suffix}", original.id);
            }
            transformed.id = candidate.clone();
            record.output_id = candidate;
            outputs.push(original.clone());
            // The passed-through original is an output sample too.
            provenance.push(SampleProvenance {
                output_id: original.id.clone(),
                source_ids: vec![original.id.clone()],
                events: Vec::new(),
            });
        }
        outputs.push(transformed);
        provenance.push(record);
    }

    Ok(PipelineRun {
        dataset: Dataset {
            samples: outputs,
            classes: dataset.classes.clone(),
            root: dataset.root.clone(),
            metadata: dataset.metadata.clone(),
        },
        provenance,
    })
}

fn process_sample(
    config: &PipelineConfig,
    specs: &[CompiledSpec<'_>],
    pool: &Dataset,
    sample_index: usize,
    sample: &Sample,
) -> Result<(Sample, SampleProvenance), PipelineError> {
    let mut current = sample.clone();
    let mut events = Vec::with_capacity(specs.len());
    let mut source_ids = vec![sample.id.clone()];

    for (spec_index, compiled) in specs.iter().enumerate() {
        let spec_index = spec_index as u32;
        let mut rng = derive_stream(config.seed, &sample.id, spec_index);
        let (kind, probability) = match compiled {
            CompiledSpec::Plain(spec) => (spec.kind(), spec.probability()),
            CompiledSpec::BboxMixUp { probability, .. } => ("BboxMixUp", *probability),
            CompiledSpec::ClassCutMix { probability, .. } => ("ClassCutMix", *probability),
        };
        // RandomCrop is exempt from the firing draw: it always applies.
        let fired = if matches!(
            compiled,
            CompiledSpec::Plain(AugmentSpec::RandomCrop { .. })
        ) {
            true
        } else {
            rng.next_f64() < probability
        };
        if !fired {
            events.push(SpecEvent {
                spec_index,
                kind,
                fired: false,
                note: None,
                draws: rng.draw_count(),
            });
            continue;
        }

        let mut note = None;
        match compiled {
            CompiledSpec::Plain(spec) => match spec {
                AugmentSpec::RandomFlip { axes, .. } => {
                    let axis = *rng.choose(axes);
                    let (image, anns) =
                        flip(current.image.as_ref().unwrap(), &current.annotations, axis);
                    current.extent = image.extent();
                    current.image = Some(image);
                    current.annotations = anns;
                }
                AugmentSpec::RandomCrop { min_frac, max_frac } => {
                    let (image, anns) = random_crop(
                        current.image.as_ref().unwrap(),
                        &current.annotations,
                        &mut rng,
                        *min_frac,
                        *max_frac,
                    );
                    current.extent = image.extent();
                    current.image = Some(image);
                    current.annotations = anns;
                }
                AugmentSpec::Rotate { mode, .. } => {
                    let (image, anns) = rotate(
                        current.image.as_ref().unwrap(),
                        &current.annotations,
                        &mut rng,
                        mode,
                    );
                    current.extent = image.extent();
                    current.image = Some(image);
                    current.annotations = anns;
                }
                AugmentSpec::Blur { sigma_range, .. } => {
                    let (image, anns) = blur(
                        current.image.as_ref().unwrap(),
                        &current.annotations,
                        &mut rng,
                        *sigma_range,
                    );
                    current.image = Some(image);
                    current.annotations = anns;
                }
                AugmentSpec::Equalise { .. } => {
                    let (image, anns) =
                        equalize(current.image.as_ref().unwrap(), &current.annotations);
                    current.image = Some(image);
                    current.annotations = anns;
                }
                AugmentSpec::Jpeg { quality, .. } => {
                    let (image, anns) = jpeg_degrade(
                        current.image.as_ref().unwrap(),
                        &current.annotations,
                        *quality,
                    )?;
                    current.image = Some(image);
                    current.annotations = anns;
                }
                AugmentSpec::MixUp { lambda, .. } => {
                    let partner = draw_partner(pool, sample_index, &mut rng);
                    let params = MixerParams {
                        lambda: *lambda,
                        ..Default::default()
                    };
                    match mixup(&current, partner, &params) {
                        Ok((out, outcome)) => {
                            if let Some(id) = outcome.partner_id {
                                source_ids.push(id);
                            }
                            current = keep_identity(current, out);
                        }
                        Err(MixerError::Ineligible(reason)) => note = Some(reason),
                        Err(e) => return Err(e.into()),
                    }
                }
                AugmentSpec::CutMix {
                    mask_proportion,
                    isolation_threshold,
                    ..
                } => {
                    let partner = draw_partner(pool, sample_index, &mut rng);
                    let params = MixerParams {
                        mask_proportion: *mask_proportion,
                        isolation_threshold: *isolation_threshold,
                        ..Default::default()
                    };
                    match cutmix(&current, partner, &params, &mut rng) {
                        Ok((out, outcome)) => {
                            if let Some(id) = outcome.partner_id {
                                source_ids.push(id);
                            }
                            current = keep_identity(current, out);
                        }
                        Err(MixerError::Ineligible(reason)) => note = Some(reason),
                        Err(e) => return Err(e.into()),
                    }
                }
                AugmentSpec::BboxMixUp { .. } | AugmentSpec::ClassCutMix { .. } => {
                    unreachable!("mixer specs are compiled")
                }
            },
            CompiledSpec::BboxMixUp {
                params,
                target_class,
                ..
            } => {
                let partner = draw_partner(pool, sample_index, &mut rng);
                match bbox_mixup(&current, partner, params, *target_class, &mut rng) {
                    Ok((out, outcome)) => {
                        if let Some(id) = outcome.partner_id {
                            source_ids.push(id);
                        }
                        current = keep_identity(current, out);
                    }
                    Err(MixerError::Ineligible(reason)) => note = Some(reason),
                    Err(e) => return Err(e.into()),
                }
            }
            CompiledSpec::ClassCutMix { params, .. } => {
                match class_cutmix(&current, pool, params, &mut rng) {
                    Ok((out, outcome)) => {
                        if let Some(id) = outcome.partner_id {
                            source_ids.push(id);
                        }
                        current = keep_identity(current, out);
                    }
                    Err(MixerError::Ineligible(reason)) => note = Some(reason),
                    Err(e) => return Err(e.into()),
                }
            }
        }

        if let Some(reason) = &note {
            log::info!(
                "sample '{}': spec {spec_index} ({kind}) ineligible, passed through: {reason}",
                sample.id
            );
        }
        events.push(SpecEvent {
            spec_index,
            kind,
            fired: true,
            note,
            draws: rng.draw_count(),
        });
    }

    let record = SampleProvenance {
        output_id: current.id.clone(),
        source_ids,
        events,
    };
    Ok((current, record))
}

/// Uniform partner from the pool, excluding the sample itself.
fn draw_partner<'a>(pool: &'a Dataset, self_index: usize, rng: &mut RngStream) -> &'a Sample {
    let drawn = rng.next_index(pool.len() - 1);
    let index = if drawn >= self_index {
        drawn + 1
    } else {
        drawn
    };
    &pool.samples[index]
}

/// Mixers return a sample carrying the first input's identity; keep the
/// chained sample's id and file name explicit.
fn keep_identity(previous: Sample, mut out: Sample) -> Sample {
    out.id = previous.id;
    out.file_name = previous.file_name;
    out
}
