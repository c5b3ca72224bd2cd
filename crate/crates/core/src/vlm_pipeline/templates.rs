//! The fixed prompt templates and their renderer.
//!
//! Placeholders are `{delay_s}`, `{trace_summary}` and `{description}`. A line
//! holding only `{trace_summary}` is dropped when no summary is supplied, so
//! the rendered text matches the bare template exactly.

use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Descriptor,
    Editor,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Descriptor => "descriptor",
            Stage::Editor => "editor",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "descriptor" => Ok(Stage::Descriptor),
            "editor" => Ok(Stage::Editor),
            other => Err(format!("unknown stage {other:?} (expected descriptor or editor)")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TemplateError {
    #[error("template {id} is a {actual} template, expected {expected}")]
    WrongStage { id: String, expected: Stage, actual: Stage },
    #[error("template {id}: unresolved placeholder {{{name}}}")]
    Unresolved { id: String, name: String },
    #[error("template {0} needs a description but none was given")]
    MissingDescription(String),
    #[error("template {0} has no description slot but a description was given")]
    UnexpectedDescription(String),
    #[error("delay must be a finite non-negative number of seconds, got {0}")]
    Delay(f64),
    #[error("unknown template {0:?}")]
    Unknown(String),
    #[error("no {stage} template at ladder level {level}")]
    Level { stage: Stage, level: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub stage: Stage,
    /// Position on the 1..=4 prompt ladder; `None` for the main pipeline prompts.
    pub ladder_level: Option<u8>,
    pub body: String,
}

impl PromptTemplate {
    pub fn references(&self, placeholder: &str) -> bool {
        self.body.contains(&format!("{{{placeholder}}}"))
    }

    fn expect_stage(&self, stage: Stage) -> Result<(), TemplateError> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(TemplateError::WrongStage {
                id: self.id.clone(),
                expected: stage,
                actual: self.stage,
            })
        }
    }
}

const PREAMBLE: &str = "Follow strictly the step-by-step methodology below and do not skip or shorten any step before giving the final one-sentence answer.";
const ATTACHED: &str = "An RGB image and a thermal image of the same scene are attached.";
const STEP_1: &str = "1. Analyze the thermal image and list all objects or furniture that show any heat traces, starting with the one with the highest heat concentration (primary). Do not omit any object that shows heat, even if the trace is faint, small, or low intensity. Explicitly state when an object shows no heat.";
const STEP_2: &str = "2. Identify and describe all secondary heat traces (for example, on books, chairs, walls, desks, or other surfaces). Mention each one individually and describe its approximate intensity (strong, moderate, faint).";
const STEP_3: &str = "3. Cross-check with the RGB image and locate every object with heat traces. For each object, provide:\nObject type, Object color, Position (left, center, right), Interaction with the person (touching, sitting, holding, near, none), Direction relative to the scene (front, back, left, right, corner)";
const STEP_4: &str = "4. Before making the final inference, double-check that no object with visible heat traces has been left out of your analysis.";
const STEP_5: &str = "5. Based on both the primary and secondary heat traces, infer the most likely past action of the person 5 seconds ago. If multiple objects have heat traces, combine them into one concise sentence that mentions all relevant actions.";
const FINAL: &str = "Final output: Provide only one short, direct sentence in past tense that precisely describes the person’s position and action {delay_s} seconds ago according to the heat traces. The answer must be concise and direct. Output only that sentence, nothing else.";
const FINAL_COMMA: &str = "Final output: Provide only one short, direct sentence in past tense that precisely describes the person’s position and action {delay_s} seconds ago, according to the heat traces. The answer must be concise and direct. Output only that sentence, nothing else.";
const SUMMARY_LINE: &str = "{trace_summary}";

const EDIT_DESCRIBED: &str = "Edit the RGB image using the description \"{description}\" to depict the scene a few seconds earlier";
const PRESERVE: &str = ", preserving environment, lighting, angle, zoom, and colors.";
const TEMPORAL: &str = " Keep the result temporally consistent with the heat traces in the thermal image.";
const ONE_PERSON: &str = " Only one person must appear in the scene.";
const REPLACE: &str = " Remove the person from the current position and render the person only in the past position and action.";

fn tpl(id: &str, stage: Stage, ladder_level: Option<u8>, body: String) -> PromptTemplate {
    PromptTemplate {
        id: id.to_string(),
        stage,
        ladder_level,
        body,
    }
}

static TEMPLATES: LazyLock<Vec<PromptTemplate>> = LazyLock::new(|| {
    use Stage::*;
    let lines = |parts: &[&str]| parts.join("\n");
    vec![
        tpl(
            "desc-main",
            Descriptor,
            None,
            lines(&[
                "Identify the thermographic traces on the thermal image.",
                "In the RGB image, describe the scene.",
                "Output one concise past-tense sentence describing what happened some seconds or minutes ago, including all these details.",
                SUMMARY_LINE,
            ]),
        ),
        tpl("desc-1", Descriptor, Some(1), lines(&[&format!("{PREAMBLE}{ATTACHED} {FINAL}"), SUMMARY_LINE])),
        tpl("desc-2", Descriptor, Some(2), lines(&[PREAMBLE, ATTACHED, STEP_1, STEP_2, FINAL_COMMA, SUMMARY_LINE])),
        tpl("desc-3", Descriptor, Some(3), lines(&[PREAMBLE, ATTACHED, STEP_1, STEP_2, STEP_3, FINAL, SUMMARY_LINE])),
        tpl(
            "desc-4",
            Descriptor,
            Some(4),
            lines(&[PREAMBLE, ATTACHED, STEP_1, STEP_2, STEP_3, STEP_4, STEP_5, FINAL, SUMMARY_LINE]),
        ),
        tpl(
            "gen-description",
            Editor,
            None,
            format!("Edit the RGB image using the description \"{{description}}\" and the thermal image to depict the scene a few seconds earlier{PRESERVE}"),
        ),
        tpl(
            "gen-thermal",
            Editor,
            None,
            format!("Edit the RGB image using the thermal image to depict the scene a few seconds earlier{PRESERVE}"),
        ),
        tpl("gen-rgb", Editor, None, format!("Edit the RGB image to depict the scene a few seconds earlier{PRESERVE}")),
        tpl("edit-1", Editor, Some(1), format!("{EDIT_DESCRIBED}{PRESERVE}{TEMPORAL}")),
        tpl("edit-2", Editor, Some(2), format!("{EDIT_DESCRIBED}{PRESERVE}{TEMPORAL}{ONE_PERSON}")),
        tpl("edit-3", Editor, Some(3), format!("{EDIT_DESCRIBED}.{TEMPORAL}{ONE_PERSON}{REPLACE}")),
        tpl("edit-4", Editor, Some(4), format!("{EDIT_DESCRIBED}{PRESERVE}{TEMPORAL}{ONE_PERSON}{REPLACE}")),
    ]
});

/// Every built-in template, main prompts first, then the two ladders.
pub fn builtin_templates() -> &'static [PromptTemplate] {
    &TEMPLATES
}

pub fn template(id: &str) -> Result<&'static PromptTemplate, TemplateError> {
    TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| TemplateError::Unknown(id.to_string()))
}

pub fn ladder_template(stage: Stage, level: u8) -> Result<&'static PromptTemplate, TemplateError> {
    TEMPLATES
        .iter()
        .find(|t| t.stage == stage && t.ladder_level == Some(level))
        .ok_or(TemplateError::Level { stage, level })
}

/// Substitutes `{name}` tokens; `None` values make a placeholder-only line vanish.
fn substitute(t: &PromptTemplate, values: &[(&str, Option<&str>)]) -> Result<String, TemplateError> {
    let mut kept: Vec<String> = Vec::new();
    for line in t.body.split('\n') {
        let sole = line
            .strip_prefix('{')
            .and_then(|l| l.strip_suffix('}'))
            .filter(|name| !name.contains(['{', '}']));
        if let Some(name) = sole {
            if let Some((_, None)) = values.iter().find(|(n, _)| *n == name) {
                continue;
            }
        }
        let mut out = String::with_capacity(line.len());
        let mut rest = line;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}').ok_or_else(|| TemplateError::Unresolved {
                id: t.id.clone(),
                name: after.to_string(),
            })?;
            let name = &after[..close];
            match values.iter().find(|(n, _)| *n == name) {
                Some((_, Some(v))) => out.push_str(v),
                _ => {
                    return Err(TemplateError::Unresolved {
                        id: t.id.clone(),
                        name: name.to_string(),
                    })
                }
            }
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        kept.push(out);
    }
    Ok(kept.join("\n"))
}

/// Renders a descriptor prompt; the delay is printed as whole seconds.
pub fn render_descriptor_prompt(
    template: &PromptTemplate,
    delay_s: f64,
    trace_summary: Option<&str>,
) -> Result<String, TemplateError> {
    template.expect_stage(Stage::Descriptor)?;
    if !delay_s.is_finite() || delay_s < 0.0 {
        return Err(TemplateError::Delay(delay_s));
    }
    let delay = format!("{}", delay_s.round() as u64);
    substitute(template, &[("delay_s", Some(&delay)), ("trace_summary", trace_summary)])
}

/// Renders an editor prompt. A description must be given exactly when the
/// template has a `{description}` slot.
pub fn render_edit_prompt(template: &PromptTemplate, description: Option<&str>) -> Result<String, TemplateError> {
    template.expect_stage(Stage::Editor)?;
    match (template.references("description"), description) {
        (true, None) => Err(TemplateError::MissingDescription(template.id.clone())),
        (false, Some(_)) => Err(TemplateError::UnexpectedDescription(template.id.clone())),
        _ => substitute(template, &[("description", description)]),
    }
}
