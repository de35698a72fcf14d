use plotters::style::{FontStyle, RGBColor};
use serde::Deserialize;

use crate::{Error, Result};

const THEME_TOML: &str = include_str!("../../assets/theme.toml");
const FONT: &[u8] = include_bytes!("../../assets/DejaVuSans.ttf");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theme {
    pub version: u32,
    pub width: u32,
    pub height: u32,
    pub font: String,
    pub caption_size: u32,
    pub label_size: u32,
    pub margin: u32,
    pub band_opacity: f64,
    pub palette: Vec<String>,
    pub failure_color: String,
}

fn parse_hex(s: &str) -> Result<RGBColor> {
    let h = s.strip_prefix('#').filter(|h| h.len() == 6).ok_or_else(|| Error::Render(format!("bad colour '{s}'")))?;
    let byte = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).map_err(|_| Error::Render(format!("bad colour '{s}'")));
    Ok(RGBColor(byte(0)?, byte(2)?, byte(4)?))
}

impl Theme {
    /// The theme shipped in `assets/theme.toml`, with its font registered.
    pub fn builtin() -> Result<Self> {
        let theme: Theme = toml::from_str(THEME_TOML).map_err(|e| Error::Render(e.to_string()))?;
        if theme.palette.is_empty() {
            return Err(Error::Render("theme palette is empty".into()));
        }
        theme.palette.iter().try_for_each(|c| parse_hex(c).map(|_| ()))?;
        parse_hex(&theme.failure_color)?;
        plotters::style::register_font(&theme.font, FontStyle::Normal, FONT).map_err(|_| Error::Render("bundled font is unreadable".into()))?;
        Ok(theme)
    }

    pub fn color(&self, i: usize) -> RGBColor {
        parse_hex(&self.palette[i % self.palette.len()]).expect("validated in builtin")
    }

    pub fn failure(&self) -> RGBColor {
        parse_hex(&self.failure_color).expect("validated in builtin")
    }
}
