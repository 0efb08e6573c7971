//! BVH (`HIERARCHY` + `MOTION`) reading and writing.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::skeleton::{Channel, Joint, Skeleton};
use super::{FeatureLayout, MotionSequence};

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        let tok = self.items.get(self.pos).copied().ok_or(Error::Parse {
            line: self.last_line,
            detail: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.1)
    }

    fn expect(&mut self, want: &str) -> Result<usize> {
        let (line, tok) = self.next()?;
        if tok != want {
            return Err(Error::Parse { line, detail: format!("expected `{want}`, found `{tok}`") });
        }
        Ok(line)
    }

    fn number(&mut self) -> Result<f64> {
        let (line, tok) = self.next()?;
        tok.parse()
            .map_err(|_| Error::Parse { line, detail: format!("expected a number, found `{tok}`") })
    }
}

fn parse_joint(tokens: &mut Tokens<'_>, parent: Option<usize>, joints: &mut Vec<Joint>) -> Result<()> {
    let (_, name) = tokens.next()?;
    tokens.expect("{")?;
    let index = joints.len();
    joints.push(Joint { name: name.to_string(), parent, offset: [0.0; 3], channels: Vec::new(), end_site: None });
    loop {
        let (line, tok) = tokens.next()?;
        match tok {
            "OFFSET" => {
                joints[index].offset = [tokens.number()?, tokens.number()?, tokens.number()?];
            }
            "CHANNELS" => {
                let count = tokens.number()?;
                if count < 0.0 || count.fract() != 0.0 {
                    return Err(Error::Parse { line, detail: format!("bad channel count {count}") });
                }
                for _ in 0..count as usize {
                    let (line, name) = tokens.next()?;
                    let ch = name.parse::<Channel>().map_err(|detail| Error::Parse { line, detail })?;
                    joints[index].channels.push(ch);
                }
            }
            "JOINT" => parse_joint(tokens, Some(index), joints)?,
            "End" => {
                tokens.expect("Site")?;
                tokens.expect("{")?;
                tokens.expect("OFFSET")?;
                joints[index].end_site = Some([tokens.number()?, tokens.number()?, tokens.number()?]);
                tokens.expect("}")?;
            }
            "}" => return Ok(()),
            other => {
                return Err(Error::Parse { line, detail: format!("unexpected `{other}` in joint `{name}`") });
            }
        }
    }
}

/// Parses BVH text into a skeleton and a channel-layout motion sequence with
/// `fps = 1 / frame_time`.
pub fn parse_bvh(bytes: &[u8]) -> Result<(Skeleton, MotionSequence)> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse { line: 1, detail: e.to_string() })?;
    let lines: Vec<&str> = text.lines().collect();

    let motion_line = lines
        .iter()
        .position(|l| l.trim() == "MOTION")
        .ok_or(Error::Parse { line: lines.len().max(1), detail: "missing MOTION section".into() })?;

    let mut tokens = Tokens {
        items: lines[..motion_line]
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect(),
        pos: 0,
        last_line: motion_line,
    };
    tokens.expect("HIERARCHY")?;
    tokens.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut tokens, None, &mut joints)?;
    if let Some(extra) = tokens.peek() {
        let line = tokens.items[tokens.pos].0;
        return Err(Error::Parse { line, detail: format!("unexpected `{extra}` after the root joint") });
    }
    let skeleton = Skeleton::new(joints).map_err(|e| Error::Parse { line: 1, detail: e.to_string() })?;
    let channels = skeleton.channel_count();

    let mut rest = lines.iter().enumerate().skip(motion_line + 1).filter(|(_, l)| !l.trim().is_empty());
    let (frames_line, frames_text) = rest.next().ok_or(Error::Parse {
        line: motion_line + 1,
        detail: "missing `Frames:` line".into(),
    })?;
    let frame_count: usize = frames_text
        .trim()
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse().ok())
        .ok_or(Error::Parse { line: frames_line + 1, detail: format!("bad frame count line `{frames_text}`") })?;
    let (time_line, time_text) = rest.next().ok_or(Error::Parse {
        line: frames_line + 1,
        detail: "missing `Frame Time:` line".into(),
    })?;
    let frame_time: f64 = time_text
        .trim()
        .strip_prefix("Frame Time:")
        .and_then(|v| v.trim().parse().ok())
        .filter(|v: &f64| *v > 0.0 && v.is_finite())
        .ok_or(Error::Parse { line: time_line + 1, detail: format!("bad frame time line `{time_text}`") })?;

    let mut data = Vec::with_capacity(frame_count * channels);
    let mut rows = 0;
    for (i, line) in rest {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse { line: i + 1, detail: format!("expected a number, found `{tok}`") })?;
            data.push(v);
        }
        let got = data.len() - before;
        if got != channels {
            return Err(Error::Parse {
                line: i + 1,
                detail: format!("motion row has {got} values but the hierarchy declares {channels} channels"),
            });
        }
        rows += 1;
    }
    if rows != frame_count {
        return Err(Error::Parse {
            line: lines.len(),
            detail: format!("`Frames: {frame_count}` but {rows} motion rows present"),
        });
    }
    let frames = Tensor::new(vec![rows, channels], data)?;
    let seq = MotionSequence::new(frames, 1.0 / frame_time, FeatureLayout::BvhChannels { channels })
        .map_err(|e| Error::Parse { line: frames_line + 1, detail: e.to_string() })?;
    Ok((skeleton, seq))
}

/// Writes BVH text. Values use the shortest representation that reads back
/// to the same `f64`.
pub fn write_bvh(skeleton: &Skeleton, seq: &MotionSequence) -> Result<String> {
    if seq.dim() != skeleton.channel_count() {
        return Err(Error::invalid(format!(
            "sequence has {} features but the skeleton has {} channels",
            seq.dim(),
            skeleton.channel_count()
        )));
    }
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, skeleton, 0, 0);
    out.push_str("MOTION\n");
    let _ = writeln!(out, "Frames: {}", seq.len());
    let _ = writeln!(out, "Frame Time: {}", 1.0 / seq.fps());
    for t in 0..seq.len() {
        let row: Vec<String> = seq.frame(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn write_joint(out: &mut String, skeleton: &Skeleton, index: usize, depth: usize) {
    let pad = "\t".repeat(depth);
    let joint = &skeleton.joints()[index];
    let kind = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{kind} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let [x, y, z] = joint.offset;
    let _ = writeln!(out, "{pad}\tOFFSET {x} {y} {z}");
    if !joint.channels.is_empty() {
        let names: Vec<String> = joint.channels.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "{pad}\tCHANNELS {} {}", joint.channels.len(), names.join(" "));
    }
    for (child, j) in skeleton.joints().iter().enumerate() {
        if j.parent == Some(index) {
            write_joint(out, skeleton, child, depth + 1);
        }
    }
    if let Some([x, y, z]) = joint.end_site {
        let _ = writeln!(out, "{pad}\tEnd Site");
        let _ = writeln!(out, "{pad}\t{{");
        let _ = writeln!(out, "{pad}\t\tOFFSET {x} {y} {z}");
        let _ = writeln!(out, "{pad}\t}}");
    }
    let _ = writeln!(out, "{pad}}}");
}
