/// A named placeholder in a prompt pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    C1,
    C2,
    Question,
    LabelA,
    LabelB,
    Choices,
}

impl Slot {
    fn parse(name: &str) -> Option<Slot> {
        Some(match name {
            "c1" => Slot::C1,
            "c2" => Slot::C2,
            "question" => Slot::Question,
            "label_a" => Slot::LabelA,
            "label_b" => Slot::LabelB,
            "choices" => Slot::Choices,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Slot),
}

/// Literal text interleaved with `{slot}` placeholders. Substituted values
/// are never re-scanned for slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pieces: Vec<Piece>,
}

impl Pattern {
    pub fn parse(text: &str) -> Result<Pattern, String> {
        let mut pieces = Vec::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_owned()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| format!("unclosed slot in `{text}`"))?;
            let name = &rest[open + 1..open + close];
            let slot = Slot::parse(name).ok_or_else(|| format!("unknown slot {{{name}}} in `{text}`"))?;
            pieces.push(Piece::Slot(slot));
            rest = &rest[open + close + 1..];
        }
        if rest.contains('}') {
            return Err(format!("stray `}}` in `{text}`"));
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_owned()));
        }
        Ok(Pattern { pieces })
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(*s),
            Piece::Text(_) => None,
        })
    }

    pub fn slot_count(&self, slot: Slot) -> usize {
        self.slots().filter(|&s| s == slot).count()
    }

    pub fn has_slot(&self, slot: Slot) -> bool {
        self.slot_count(slot) > 0
    }

    pub fn render<'a>(&self, mut value: impl FnMut(Slot) -> &'a str) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(value(*s)),
            }
        }
        out
    }
}
