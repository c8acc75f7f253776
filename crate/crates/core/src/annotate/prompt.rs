//! Prompt templates, the exemplar bank, request builders and reply parsers.

use serde::{Deserialize, Serialize};

use super::client::{ContentPart, VlmRequest};
use super::AnnotateError;
use crate::cad::{CadModel, Extent};
use crate::codec::sanitize_line;
use crate::segment::{extrusion_direction_label, Component, Direction, DEFAULT_DIRECTION_TOLERANCE_DEG};

pub const PROMPT1: &str = "Background: The user now has a CAD model, which is formed by extruding a sketch. \
User input: The user will input two pictures, the first is the sketch, and the second is the CAD model after \
the sketch is extruded. Task: Describe the CAD model. Please describe the sketch in detail first, include the \
additional information in the description and output the final description result as a single line. \
Additional information: {additional} Examples: {examples}";

pub const PROMPT2_INTRO: &str = "A CAD model may consist of multiple modules. Each module constitutes a part of \
the model, which can be a solid or a feature used for cutting, such as creating a hole. The user has a CAD \
consisting of {num_parts} modules. The user will input {num_images} pictures, the first image is the original \
CAD model, followed by {num_parts} images where each module is rendered with enhanced highlighting. These \
modules collectively form the original CAD model. Modules used for cutting are highlighted in blue.";

pub const PROMPT2_DESCRIPTIONS: &str = "The subsequent description explains each of the {num_parts} modules \
individually, following the order presented in the module images: {descriptions}";

pub const PROMPT2_TASK: &str = "Task: You need to output three lines, Line 1: A concise description of the \
overall macro of CAD based on first image. Line 2: A detailed description that includes the specific \
characteristics of each of the {num_parts} modules mentioned above, as well as the process by which they are \
assembled based on all provided images and component descriptions. Line 3: Short names for {num_parts} \
modules, separated by semicolons. Example: {examples}";

pub const JUDGE_PROMPT: &str = "A CAD model may consist of multiple modules. The user has a CAD consisting of \
{num_parts} modules. The user will input {num_images} pictures, the first image is the original CAD model, \
followed by {num_parts} images where each module is rendered with enhanced highlighting. Modules used for \
cutting are highlighted in blue. The modules, in order: {descriptions} Task: Identify the removable module, \
whose deletion leaves a logically valid CAD model. Deleting a solid module while keeping only a cutting module \
that acts on it is not valid. You need to output four lines, Line 1: The number of the removable module. \
Line 2: Why deleting it is valid. Line 3: An instruction to delete the module. Line 4: An instruction to add \
the module back.";

pub(crate) const STAGE2_MARKER: &str = "You need to output three lines";
pub(crate) const JUDGE_MARKER: &str = "Identify the removable module";

pub const DEFAULT_COMPLEXITY_THRESHOLDS: [usize; 4] = [10, 20, 35, 60];
pub const LEVELS: u8 = 5;

/// Complexity level 1..=5 of the flattened command count; a count equal to
/// a threshold falls in the lower level.
pub fn complexity_level(model: &CadModel, thresholds: &[usize; 4]) -> Result<u8, AnnotateError> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnnotateError::Config(format!(
            "complexity thresholds must increase strictly: {thresholds:?}"
        )));
    }
    let count = model.command_count();
    Ok(1 + thresholds.iter().filter(|&&t| count > t).count() as u8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub level: u8,
    pub prompt_stage: u8,
    pub exemplar_input: String,
    pub exemplar_output: String,
}

/// Two-shot exemplars per complexity level and prompt stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBank {
    exemplars: Vec<Exemplar>,
}

impl ExampleBank {
    pub fn new(exemplars: Vec<Exemplar>) -> Result<Self, AnnotateError> {
        let bank = Self { exemplars };
        for level in 1..=LEVELS {
            for stage in 1..=2 {
                let n = bank.matching(level, stage).count();
                if n < 2 {
                    return Err(AnnotateError::Config(format!(
                        "example bank has {n} exemplars for level {level} stage {stage}; two are needed"
                    )));
                }
            }
        }
        Ok(bank)
    }

    /// One JSON object per line: `{level, prompt_stage, exemplar_input, exemplar_output}`.
    pub fn from_jsonl(text: &str) -> Result<Self, AnnotateError> {
        let exemplars = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| AnnotateError::Config(format!("example bank line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Self::new(exemplars)
    }

    pub fn to_jsonl(&self) -> String {
        self.exemplars
            .iter()
            .map(|e| serde_json::to_string(e).expect("exemplar serializes") + "\n")
            .collect()
    }

    pub fn builtin() -> Self {
        Self::new(builtin_exemplars()).expect("builtin bank is complete")
    }

    fn matching(&self, level: u8, stage: u8) -> impl Iterator<Item = &Exemplar> {
        self.exemplars
            .iter()
            .filter(move |e| e.level == level && e.prompt_stage == stage)
    }

    /// Two consecutive exemplars (cyclically) starting at `key`.
    pub fn pick(&self, level: u8, stage: u8, key: u64) -> [&Exemplar; 2] {
        let pool: Vec<&Exemplar> = self.matching(level, stage).collect();
        let i = (key % pool.len() as u64) as usize;
        [pool[i], pool[(i + 1) % pool.len()]]
    }
}

fn builtin_exemplars() -> Vec<Exemplar> {
    let stage1: [(&str, &str); 10] = [
        (
            "a rectangle, extruded upwards with an extrusion length of 8 units",
            "A flat rectangular plate with straight edges and square corners, extruded upwards with an extrusion length of 8 units",
        ),
        (
            "a circle, extruded upwards with an extrusion length of 20 units",
            "A circular disk sketch forming a solid cylinder, extruded upwards with an extrusion length of 20 units",
        ),
        (
            "a rectangle with one rounded end, extruded upwards with an extrusion length of 6 units",
            "A slot-shaped profile made of two parallel lines joined by a semicircular arc at one end, extruded upwards with an extrusion length of 6 units",
        ),
        (
            "a rectangle with a circular inner loop, extruded upwards with an extrusion length of 10 units",
            "A rectangular plate with a round hole through its centre, extruded upwards with an extrusion length of 10 units",
        ),
        (
            "an L-shaped outline, extruded towards the front with an extrusion length of 30 units",
            "An L-shaped bracket profile with one long leg and one short leg meeting at a right angle, extruded towards the front with an extrusion length of 30 units",
        ),
        (
            "a triangle, extruded to the right with an extrusion length of 12 units",
            "A right-angled triangular rib with a sloped hypotenuse, extruded to the right with an extrusion length of 12 units",
        ),
        (
            "four equal circles, extruded downwards with an extrusion length of 16 units, quantity 4",
            "Four identical small circles placed at the corners of a square pattern, forming cylindrical holes, extruded downwards with an extrusion length of 16 units",
        ),
        (
            "a ring of two concentric circles, extruded upwards with an extrusion length of 4 units",
            "An annular washer sketch bounded by an outer circle and a concentric inner circle, extruded upwards with an extrusion length of 4 units",
        ),
        (
            "a polygon with eight straight edges and arcs, extruded upwards with an extrusion length of 40 units",
            "An elongated housing outline with straight sides and rounded corners, extruded upwards with an extrusion length of 40 units",
        ),
        (
            "six circles in a ring, quantity 6, extruded downwards with an extrusion length of 10 units",
            "Six identical circular holes evenly spaced on a bolt circle, extruded downwards with an extrusion length of 10 units",
        ),
    ];
    let stage2: [(&str, &str); 10] = [
        (
            "2 modules: a rectangular plate; a cylindrical hole",
            "A rectangular plate with a single hole.\nA flat rectangular plate forms the base and a cylindrical cut passes through its centre to create a hole.\nBase plate; Centre hole",
        ),
        (
            "2 modules: a circular disk; a smaller cylinder on top",
            "A stepped cylinder.\nA wide circular disk forms the base and a narrower cylinder is joined on its top face, giving a stepped profile.\nBase disk; Top boss",
        ),
        (
            "3 modules: a plate; a boss; a hole",
            "A plate with a raised boss and a hole.\nA rectangular plate is the base, a cylindrical boss is joined on its upper face near one end, and a round hole is cut through the other end.\nPlate; Boss; Hole",
        ),
        (
            "2 modules: an L-shaped bracket; four holes",
            "An L-shaped bracket with mounting holes.\nAn L-shaped solid bracket is extruded along its length and four identical holes are cut through its base leg for mounting.\nBracket; Mounting holes",
        ),
        (
            "3 modules: a block; a slot; a rib",
            "A block with a slot and a supporting rib.\nA rectangular block forms the body, a slot is cut along its top, and a triangular rib is joined to one side for support.\nBlock; Slot; Rib",
        ),
        (
            "3 modules: a flange; a tube; a bore",
            "A flanged tube.\nA circular flange forms the base, a cylindrical tube rises from its centre, and a bore is cut through both along the axis.\nFlange; Tube; Bore",
        ),
        (
            "4 modules: a base plate; a wall; bolt holes; a window",
            "A mounting plate with an upright wall.\nA base plate carries an upright wall joined along one edge, a set of bolt holes is cut through the plate, and a rectangular window is cut in the wall.\nBase plate; Wall; Bolt holes; Window",
        ),
        (
            "4 modules: a disk; a hub; spokes; a hole pattern",
            "A wheel-like disk with a hub.\nA thin disk forms the rim, a hub is joined at the centre, spokes connect hub and rim, and a pattern of holes lightens the disk.\nDisk; Hub; Spokes; Hole pattern",
        ),
        (
            "5 modules: a housing; a cavity; a lid seat; bosses; holes",
            "A hollow rectangular housing.\nAn outer housing block is hollowed by a cavity cut, a seat for a lid is cut around the rim, screw bosses are joined inside the corners, and holes are cut through the bosses.\nHousing; Cavity; Lid seat; Bosses; Screw holes",
        ),
        (
            "5 modules: a frame; a crossbar; feet; slots; a handle",
            "A frame with feet and a handle.\nA rectangular frame is joined with a central crossbar, four feet are added underneath, slots are cut into the sides, and a handle is joined on top.\nFrame; Crossbar; Feet; Slots; Handle",
        ),
    ];
    let mut out = Vec::new();
    for (stage, table) in [(1u8, &stage1), (2u8, &stage2)] {
        for (i, (input, output)) in table.iter().enumerate() {
            out.push(Exemplar {
                level: (i / 2) as u8 + 1,
                prompt_stage: stage,
                exemplar_input: input.to_string(),
                exemplar_output: output.to_string(),
            });
        }
    }
    out
}

fn format_examples(examples: [&Exemplar; 2]) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, e)| format!("Example {}: Input: {} Output: {}", i + 1, e.exemplar_input, e.exemplar_output))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Extra facts spliced into the stage-1 prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stage1Extras {
    pub direction: Option<Direction>,
    pub extent: Extent,
    pub length: i32,
    pub second_length: i32,
    pub multiplicity: usize,
}

impl Stage1Extras {
    pub fn of(component: &Component) -> Self {
        let e = &component.representative.extrude;
        Self {
            direction: extrusion_direction_label(&component.representative, DEFAULT_DIRECTION_TOLERANCE_DEG),
            extent: e.extent,
            length: e.dist1,
            second_length: if e.extent == Extent::TwoSided { e.dist2 } else { 0 },
            multiplicity: component.multiplicity,
        }
    }

    pub fn text(&self) -> String {
        let mut out = match (self.direction, self.extent) {
            (Some(d), Extent::OneSided) => {
                format!("Extruded {} with an extrusion length of {} units.", d.phrase(), self.length)
            }
            (Some(d), Extent::Symmetric) => format!(
                "Extruded symmetrically {} and in the opposite direction with a total extrusion length of {} units.",
                d.phrase(),
                self.length
            ),
            (Some(d), Extent::TwoSided) => format!(
                "Extruded {} with an extrusion length of {} units and in the opposite direction by {} units.",
                d.phrase(),
                self.length,
                self.second_length
            ),
            (None, Extent::TwoSided) => format!(
                "Extrusion lengths of {} and {} units on the two sides of the sketch plane.",
                self.length, self.second_length
            ),
            (None, _) => format!("Extrusion length of {} units.", self.length),
        };
        if self.multiplicity > 1 {
            out.push_str(&format!(
                " The component consists of {} identical sketch-extrude pairs.",
                self.multiplicity
            ));
        }
        out
    }
}

pub fn build_stage1_request(
    model_name: &str,
    extras: &Stage1Extras,
    examples: [&Exemplar; 2],
    sketch_png: &[u8],
    component_png: &[u8],
) -> VlmRequest {
    let text = PROMPT1
        .replace("{additional}", &extras.text())
        .replace("{examples}", &format_examples(examples));
    VlmRequest::user(
        model_name,
        vec![
            ContentPart::text(text),
            ContentPart::png(sketch_png),
            ContentPart::png(component_png),
        ],
    )
}

fn numbered(descriptions: &[String]) -> String {
    descriptions
        .iter()
        .enumerate()
        .map(|(i, d)| format!("Module {}: {d}", i + 1))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fill_counts(template: &str, n: usize) -> String {
    template
        .replace("{num_parts}", &n.to_string())
        .replace("{num_images}", &(n + 1).to_string())
}

/// Prompt text, the full view, the outline views in component order, the
/// stage-1 descriptions, then the task and two exemplars.
pub fn build_stage2_request(
    model_name: &str,
    descriptions: &[String],
    full_png: &[u8],
    outline_pngs: &[Vec<u8>],
    examples: [&Exemplar; 2],
) -> Result<VlmRequest, AnnotateError> {
    let n = descriptions.len();
    if outline_pngs.len() != n {
        return Err(AnnotateError::Structural(format!(
            "{n} component descriptions but {} outline images",
            outline_pngs.len()
        )));
    }
    let mut parts = vec![ContentPart::text(fill_counts(PROMPT2_INTRO, n)), ContentPart::png(full_png)];
    parts.extend(outline_pngs.iter().map(|p| ContentPart::png(p)));
    parts.push(ContentPart::text(
        fill_counts(PROMPT2_DESCRIPTIONS, n).replace("{descriptions}", &numbered(descriptions)),
    ));
    parts.push(ContentPart::text(
        fill_counts(PROMPT2_TASK, n).replace("{examples}", &format_examples(examples)),
    ));
    Ok(VlmRequest::user(model_name, parts))
}

pub fn build_judge_request(
    model_name: &str,
    descriptions: &[String],
    full_png: &[u8],
    outline_pngs: &[Vec<u8>],
) -> Result<VlmRequest, AnnotateError> {
    let n = descriptions.len();
    if outline_pngs.len() != n {
        return Err(AnnotateError::Structural(format!(
            "{n} component descriptions but {} outline images",
            outline_pngs.len()
        )));
    }
    let mut parts = vec![ContentPart::text(
        fill_counts(JUDGE_PROMPT, n).replace("{descriptions}", &numbered(descriptions)),
    )];
    parts.push(ContentPart::png(full_png));
    parts.extend(outline_pngs.iter().map(|p| ContentPart::png(p)));
    Ok(VlmRequest::user(model_name, parts))
}

fn parse_error(message: impl Into<String>, raw: &str) -> AnnotateError {
    AnnotateError::Parse {
        message: message.into(),
        raw: raw.to_string(),
    }
}

/// Non-empty trimmed lines with any leading "Line N:" label removed.
fn reply_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let lower = l.to_ascii_lowercase();
            match lower.strip_prefix("line ") {
                Some(rest) => match rest.find(':') {
                    Some(colon) if rest[..colon].trim().chars().all(|c| c.is_ascii_digit()) => {
                        l[5 + colon + 1..].trim().to_string()
                    }
                    _ => l.to_string(),
                },
                None => l.to_string(),
            }
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// A stage-1 reply is one description; stray line breaks are folded.
pub fn parse_stage1_response(text: &str) -> Result<String, AnnotateError> {
    let line = sanitize_line(text);
    if line.is_empty() {
        return Err(parse_error("empty description", text));
    }
    Ok(line)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Reply {
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub detailed: String,
    pub names: Vec<String>,
}

pub fn parse_stage2_response(text: &str, num_parts: usize) -> Result<Stage2Reply, AnnotateError> {
    let lines = reply_lines(text);
    if lines.len() != 3 {
        return Err(parse_error(format!("expected 3 lines, found {}", lines.len()), text));
    }
    let names: Vec<String> = lines[2]
        .split(';')
        .map(|n| sanitize_line(n.trim().trim_end_matches('.')))
        .filter(|n| !n.is_empty())
        .collect();
    if names.len() != num_parts {
        return Err(parse_error(
            format!("name count {} does not match {num_parts} components", names.len()),
            text,
        ));
    }
    Ok(Stage2Reply {
        abstract_text: sanitize_line(&lines[0]),
        detailed: sanitize_line(&lines[1]),
        names,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeReply {
    /// Zero-based component index.
    pub index: usize,
    pub justification: String,
    pub deletion: String,
    pub addition: String,
}

pub fn parse_judge_response(text: &str, num_parts: usize) -> Result<JudgeReply, AnnotateError> {
    let lines = reply_lines(text);
    if lines.len() != 4 {
        return Err(parse_error(format!("expected 4 lines, found {}", lines.len()), text));
    }
    let number: String = lines[0].chars().filter(char::is_ascii_digit).collect();
    let k: usize = number
        .parse()
        .map_err(|_| parse_error("line 1 has no module number", text))?;
    if k == 0 || k > num_parts {
        return Err(parse_error(format!("module {k} out of range 1..={num_parts}"), text));
    }
    Ok(JudgeReply {
        index: k - 1,
        justification: sanitize_line(&lines[1]),
        deletion: sanitize_line(&lines[2]),
        addition: sanitize_line(&lines[3]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::BooleanOp;
    use crate::fixtures;
    use crate::segment::segment;

    fn model_with_commands(n_lines: usize) -> CadModel {
        // One loop of n_lines curves plus its marker and the extrusion.
        let mut m = fixtures::unit_cube("c");
        let lp = &mut m.pairs[0].sketch.loops[0];
        lp.curves.clear();
        for i in 1..n_lines {
            lp.curves.push(crate::cad::Curve::Line {
                end: crate::cad::Point2::new(i as i32, (i * i) as i32 % 50),
            });
        }
        lp.curves.push(crate::cad::Curve::Line {
            end: crate::cad::Point2::ORIGIN,
        });
        m
    }

    #[test]
    fn complexity_boundaries() {
        let t = DEFAULT_COMPLEXITY_THRESHOLDS;
        assert_eq!(complexity_level(&fixtures::unit_cube("c"), &t).unwrap(), 1);
        assert_eq!(model_with_commands(8).command_count(), 10);
        assert_eq!(complexity_level(&model_with_commands(8), &t).unwrap(), 1);
        assert_eq!(complexity_level(&model_with_commands(9), &t).unwrap(), 2);
        assert_eq!(complexity_level(&model_with_commands(80), &t).unwrap(), 5);
        assert!(complexity_level(&fixtures::unit_cube("c"), &[10, 10, 20, 30]).is_err());
    }

    #[test]
    fn bank_needs_two_per_level() {
        let bank = ExampleBank::builtin();
        let round = ExampleBank::from_jsonl(&bank.to_jsonl()).unwrap();
        assert_eq!(round, bank);
        let mut short = builtin_exemplars();
        short.retain(|e| !(e.level == 3 && e.prompt_stage == 1 && e.exemplar_input.starts_with("an L")));
        assert!(matches!(ExampleBank::new(short), Err(AnnotateError::Config(_))));
        let [a, b] = bank.pick(2, 1, 7);
        assert_ne!(a, b);
    }

    #[test]
    fn stage1_prompt_slots() {
        let mut cube = fixtures::unit_cube("c");
        cube.pairs[0].extrude.dist1 = 12;
        let comp = &segment(&cube, 3)[0];
        let bank = ExampleBank::builtin();
        let req = build_stage1_request("m", &Stage1Extras::of(comp), bank.pick(1, 1, 0), b"s", b"c");
        let text = req.text();
        assert!(text.contains("extruded upwards with an extrusion length of 12 units") || text.contains("Extruded upwards with an extrusion length of 12 units"));
        assert!(!text.contains("identical sketch-extrude pairs"));
        assert_eq!(req.images().len(), 2);
        assert!(text.contains("Example 1:") && text.contains("Example 2:"));

        let mut ring = fixtures::unit_cube("r");
        for i in 0..4 {
            ring.pairs.push(fixtures::cylinder_pair([4 + 6 * i, 4, 32], 2, 5, BooleanOp::Join));
        }
        let comps = segment(&ring, 3);
        let text = Stage1Extras::of(&comps[1]).text();
        assert!(text.contains("4 identical sketch-extrude pairs"));

        let mut tilted = fixtures::unit_cube("t");
        tilted.pairs[0].extrude.angles = [45, 55, 0];
        let text = Stage1Extras::of(&segment(&tilted, 3)[0]).text();
        assert!(!text.contains("Extruded"));
        assert!(text.starts_with("Extrusion length of 32 units"));
    }

    #[test]
    fn stage2_images_in_order() {
        let bank = ExampleBank::builtin();
        let d: Vec<String> = (0..4).map(|i| format!("desc {i}")).collect();
        let outlines: Vec<Vec<u8>> = (1..=4).map(|i| vec![i]).collect();
        let req = build_stage2_request("m", &d, &[0], &outlines, bank.pick(3, 2, 0)).unwrap();
        let images = req.images();
        assert_eq!(images.len(), 5);
        assert_eq!(images[0], "AA==");
        assert_eq!(images[1], "AQ==");
        assert_eq!(images[4], "BA==");
        let text = req.text();
        assert!(text.contains("consisting of 4 modules") && text.contains("input 5 pictures"));
        assert!(text.contains("Module 4: desc 3"));
        assert!(!text.contains("{num_parts}"));
        assert!(matches!(
            build_stage2_request("m", &d, &[0], &outlines[..3], bank.pick(3, 2, 0)),
            Err(AnnotateError::Structural(_))
        ));
    }

    #[test]
    fn stage2_reply_parsing() {
        let ok = parse_stage2_response("A bracket.\nA plate with a hole.\nPlate; Hole\n", 2).unwrap();
        assert_eq!(ok.names, vec!["Plate", "Hole"]);
        let labelled = parse_stage2_response("Line 1: A.\nLine 2: B.\nLine 3: X; Y", 2).unwrap();
        assert_eq!(labelled.abstract_text, "A.");
        match parse_stage2_response("A.\nB.", 2) {
            Err(AnnotateError::Parse { message, raw }) => {
                assert!(message.starts_with("expected 3 lines"));
                assert_eq!(raw, "A.\nB.");
            }
            other => panic!("{other:?}"),
        }
        match parse_stage2_response("A.\nB.\nOnly", 2) {
            Err(AnnotateError::Parse { message, .. }) => assert!(message.starts_with("name count")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn judge_reply_parsing() {
        let r = parse_judge_response("Line 1: 2\nok\ndelete it\nadd it", 2).unwrap();
        assert_eq!(r.index, 1);
        assert!(parse_judge_response("3\na\nb\nc", 2).is_err());
        assert!(parse_judge_response("2\na\nb", 2).is_err());
    }
}
