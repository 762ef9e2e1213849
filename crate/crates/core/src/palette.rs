//! Group colors.
//!
//! A [`Color`] is an opaque token: either the reserved grey [`Color::DEFAULT`]
//! used by ungrouped mentions, or a numbered palette slot. The [`Palette`]
//! turns slots into CSS hex strings for display.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

const DEFAULT_TOKEN: &str = "grey";
pub const DEFAULT_HEX: &str = "#9e9e9e";

/// Twenty visually distinct colors; the grey tones of the usual category
/// sets are left out so nothing collides with the default.
pub const BASE_PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#bcbd22",
    "#17becf", "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5", "#c49c94", "#f7b6d2",
    "#dbdb8d", "#9edae5", "#393b79", "#637939",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Default,
    Slot(u32),
}

impl Color {
    pub const DEFAULT: Color = Color::Default;

    pub fn is_default(self) -> bool {
        matches!(self, Color::Default)
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Color::Default => f.write_str(DEFAULT_TOKEN),
            Color::Slot(n) => write!(f, "c{n}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid color token {0:?}")]
pub struct ColorParseError(pub String);

impl FromStr for Color {
    type Err = ColorParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == DEFAULT_TOKEN {
            return Ok(Color::Default);
        }
        s.strip_prefix('c')
            .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
            .filter(|digits| digits.len() == 1 || !digits.starts_with('0'))
            .and_then(|digits| digits.parse().ok())
            .map(Color::Slot)
            .ok_or_else(|| ColorParseError(s.to_owned()))
    }
}

impl Serialize for Color {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Color {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Maps color slots to CSS colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Palette {
    colors: Vec<String>,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: BASE_PALETTE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Palette {
    pub fn new(colors: Vec<String>) -> Self {
        Self { colors }
    }

    pub fn base_len(&self) -> usize {
        self.colors.len()
    }

    /// CSS hex for a color. Slots past the configured list continue by
    /// rotating the hue by the golden-ratio conjugate each step.
    pub fn css(&self, color: Color) -> String {
        match color {
            Color::Default => DEFAULT_HEX.to_owned(),
            Color::Slot(n) => match self.colors.get(n as usize) {
                Some(c) => c.clone(),
                None => {
                    let k = n as usize - self.colors.len();
                    let hue = (0.11 + 0.618_033_988_749_895 * (k as f64 + 1.0)).fract();
                    // Alternate lightness so neighbouring extension colors differ
                    // in more than hue.
                    let lightness = if k.is_multiple_of(2) { 0.45 } else { 0.62 };
                    hsl_to_hex(hue, 0.65, lightness)
                }
            },
        }
    }
}

fn hsl_to_hex(h: f64, s: f64, l: f64) -> String {
    let q = if l < 0.5 {
        l * (1.0 + s)
    } else {
        l + s - l * s
    };
    let p = 2.0 * l - q;
    let channel = |mut t: f64| {
        if t < 0.0 {
            t += 1.0;
        }
        if t > 1.0 {
            t -= 1.0;
        }
        let v = if t < 1.0 / 6.0 {
            p + (q - p) * 6.0 * t
        } else if t < 0.5 {
            q
        } else if t < 2.0 / 3.0 {
            p + (q - p) * (2.0 / 3.0 - t) * 6.0
        } else {
            p
        };
        (v * 255.0).round().clamp(0.0, 255.0) as u8
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        channel(h + 1.0 / 3.0),
        channel(h),
        channel(h - 1.0 / 3.0)
    )
}
