use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A screen category a keyword can map to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScreenType {
    #[serde(rename = "TV")]
    Tv,
    Smartphone,
    Computer,
}

impl ScreenType {
    pub const ALL: [ScreenType; 3] = [ScreenType::Tv, ScreenType::Smartphone, ScreenType::Computer];

    pub fn as_str(self) -> &'static str {
        match self {
            ScreenType::Tv => "TV",
            ScreenType::Smartphone => "Smartphone",
            ScreenType::Computer => "Computer",
        }
    }
}

impl fmt::Display for ScreenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScreenType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tv" => Ok(ScreenType::Tv),
            "smartphone" => Ok(ScreenType::Smartphone),
            "computer" => Ok(ScreenType::Computer),
            other => Err(format!("unknown screen type {other:?}")),
        }
    }
}

/// Ground-truth or predicted frame/group label: a screen type or no screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "TV")]
    Tv,
    Smartphone,
    Computer,
    NonScreen,
}

impl Label {
    pub fn screen_type(self) -> Option<ScreenType> {
        match self {
            Label::Tv => Some(ScreenType::Tv),
            Label::Smartphone => Some(ScreenType::Smartphone),
            Label::Computer => Some(ScreenType::Computer),
            Label::NonScreen => None,
        }
    }

    pub fn is_screen(self) -> bool {
        self != Label::NonScreen
    }

    pub fn as_str(self) -> &'static str {
        match self.screen_type() {
            Some(t) => t.as_str(),
            None => "NonScreen",
        }
    }
}

impl From<ScreenType> for Label {
    fn from(t: ScreenType) -> Self {
        match t {
            ScreenType::Tv => Label::Tv,
            ScreenType::Smartphone => Label::Smartphone,
            ScreenType::Computer => Label::Computer,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nonscreen" | "non-screen" | "none" => Ok(Label::NonScreen),
            other => other
                .parse::<ScreenType>()
                .map(Label::from)
                .map_err(|_| format!("unknown label {s:?}")),
        }
    }
}

/// Most frequent label among `labels`, ties broken by first occurrence.
pub fn majority_label<I: IntoIterator<Item = Label>>(labels: I) -> Option<Label> {
    let mut counts: Vec<(Label, usize)> = Vec::new();
    for l in labels {
        match counts.iter_mut().find(|(x, _)| *x == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    let mut best: Option<(Label, usize)> = None;
    for (l, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l)
}
