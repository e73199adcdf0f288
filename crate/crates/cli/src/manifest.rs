//! Run manifests: every producing command records its resolved
//! configuration, seed, and input hashes so an output tree is
//! reproducible from the manifest alone. Execution details that do not
//! affect bytes (worker count) are deliberately excluded.

use crate::CliError;
use boxaug::canonical::Value;
use boxaug::imageops::{FlipAxis, RightAngle, RotationMode};
use boxaug::pipeline::{AugmentSpec, ClassRef, OutputMode, PipelineConfig};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub struct RunManifest {
    pub command: &'static str,
    pub seed: Option<u64>,
    pub inputs: Vec<(String, Value)>,
    pub images_root: Option<PathBuf>,
    pub config: Option<Value>,
    pub extra: Vec<(String, Value)>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut entries: Vec<(String, Value)> = vec![
            ("command".into(), Value::str(self.command)),
            ("tool_version".into(), Value::str(env!("CARGO_PKG_VERSION"))),
            ("inputs".into(), Value::object(self.inputs.clone())),
        ];
        if let Some(seed) = self.seed {
            entries.push(("seed".into(), Value::UInt(seed)));
        }
        if let Some(root) = &self.images_root {
            entries.push(("images_root".into(), Value::str(root.display().to_string())));
        }
        if let Some(config) = &self.config {
            entries.push(("config".into(), config.clone()));
        }
        entries.extend(self.extra.clone());
        let mut json = Value::object(entries).to_json_string();
        json.push('\n');
        std::fs::write(path, &json)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn hash_input(label: &str, path: &Path) -> Result<(String, Value), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((
        label.to_owned(),
        Value::object([
            ("path", Value::str(path.display().to_string())),
            ("sha256", Value::str(hex)),
        ]),
    ))
}

fn class_ref_value(c: &ClassRef) -> Value {
    match c {
        ClassRef::Id(id) => Value::UInt(*id),
        ClassRef::Name(name) => Value::str(name),
    }
}

/// The resolved pipeline config echoed into the manifest.
pub fn config_value(config: &PipelineConfig) -> Value {
    let specs = config.specs.iter().map(|spec| {
        let mut fields: Vec<(String, Value)> = vec![("kind".into(), Value::str(spec.kind()))];
        match spec {
            AugmentSpec::RandomFlip { probability, axes } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                fields.push((
                    "axes".into(),
                    Value::array(axes.iter().map(|a| match a {
                        FlipAxis::Horizontal => Value::str("horizontal"),
                        FlipAxis::Vertical => Value::str("vertical"),
                    })),
                ));
            }
            AugmentSpec::RandomCrop { min_frac, max_frac } => {
                fields.push(("min_frac".into(), Value::Fixed(*min_frac)));
                fields.push(("max_frac".into(), Value::Fixed(*max_frac)));
            }
            AugmentSpec::Rotate { probability, mode } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                match mode {
                    RotationMode::RightAngles(angles) => fields.push((
                        "angles".into(),
                        Value::array(
                            angles
                                .iter()
                                .map(|a: &RightAngle| Value::UInt(a.degrees() as u64)),
                        ),
                    )),
                    RotationMode::ArbitraryDegrees { min_deg, max_deg } => fields.push((
                        "arbitrary_degrees".into(),
                        Value::array([Value::Fixed(*min_deg), Value::Fixed(*max_deg)]),
                    )),
                }
            }
            AugmentSpec::Blur {
                probability,
                sigma_range,
            } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                fields.push((
                    "sigma_range".into(),
                    Value::array([Value::Fixed(sigma_range.0), Value::Fixed(sigma_range.1)]),
                ));
            }
            AugmentSpec::Equalise { probability } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
            }
            AugmentSpec::Jpeg {
                probability,
                quality,
            } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                fields.push(("quality".into(), Value::UInt(*quality as u64)));
            }
            AugmentSpec::MixUp {
                probability,
                lambda,
            } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                fields.push(("lambda".into(), Value::Fixed(*lambda)));
            }
            AugmentSpec::BboxMixUp {
                probability,
                lambda,
                isolation_threshold,
                target_class,
            } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                fields.push(("lambda".into(), Value::Fixed(*lambda)));
                fields.push((
                    "isolation_threshold".into(),
                    Value::Fixed(*isolation_threshold),
                ));
                if let Some(c) = target_class {
                    fields.push(("target_class".into(), class_ref_value(c)));
                }
            }
            AugmentSpec::CutMix {
                probability,
                mask_proportion,
                isolation_threshold,
            } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                fields.push(("mask_proportion".into(), Value::Fixed(*mask_proportion)));
                fields.push((
                    "isolation_threshold".into(),
                    Value::Fixed(*isolation_threshold),
                ));
            }
            AugmentSpec::ClassCutMix {
                probability,
                mask_proportion,
                isolation_threshold,
                class_pair,
            } => {
                fields.push(("probability".into(), Value::Fixed(*probability)));
                fields.push(("mask_proportion".into(), Value::Fixed(*mask_proportion)));
                fields.push((
                    "isolation_threshold".into(),
                    Value::Fixed(*isolation_threshold),
                ));
                fields.push((
                    "class_pair".into(),
                    Value::array([
                        class_ref_value(&class_pair.0),
                        class_ref_value(&class_pair.1),
                    ]),
                ));
            }
        }
        Value::object(fields)
    });
    Value::object([
        (
            "output_mode",
            Value::str(match config.output_mode {
                OutputMode::Transform => "transform",
                OutputMode::Extend => "extend",
            }),
        ),
        ("specs", Value::array(specs)),
    ])
}
