//! Light fields stored as one PNG per view.
//!
//! A directory may carry a `layout.toml` descriptor; without one the HCI
//! benchmark convention is assumed: 9x9 views named `input_Cam{index:03}.png`
//! with `index = v * 9 + u`, of which the central 7x7 are used, and ground
//! truth in `gt_disp_lowres.pfm`.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use lfdepth_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};
use crate::image::{DisparityMap, Image};
use crate::lightfield::LightField;
use crate::pfm::{read_pfm, write_pfm};

pub const LAYOUT_FILE: &str = "layout.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LfMode {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetLayout {
    /// File name with `{u}`, `{v}` and `{index}` placeholders, each optionally
    /// zero-padded as in `{index:03}`.
    pub pattern: String,
    /// Views stored per axis, `[U, V]`; `index = v * U + u`.
    pub grid: [usize; 2],
    /// Central window actually loaded, `[U, V]`; the whole grid when absent.
    #[serde(default)]
    pub window: Option<[usize; 2]>,
    #[serde(default)]
    pub ground_truth: Option<String>,
    #[serde(default)]
    pub mode: Option<LfMode>,
    #[serde(default)]
    pub disparity_range: Option<[f64; 2]>,
}

impl DatasetLayout {
    pub fn hci() -> Self {
        Self {
            pattern: "input_Cam{index:03}.png".into(),
            grid: [9, 9],
            window: Some([7, 7]),
            ground_truth: Some("gt_disp_lowres.pfm".into()),
            mode: Some(LfMode::Dense),
            disparity_range: Some([-4.0, 4.0]),
        }
    }

    /// The descriptor in `dir`, or the HCI convention if there is none.
    pub fn for_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(LAYOUT_FILE);
        if !path.exists() {
            return Ok(Self::hci());
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path,
            msg: e.to_string(),
        })
    }

    fn window(&self) -> Result<[usize; 2]> {
        let w = self.window.unwrap_or(self.grid);
        for a in 0..2 {
            if w[a] == 0 || w[a] % 2 == 0 || w[a] > self.grid[a] || (self.grid[a] - w[a]) % 2 != 0 {
                return Err(invalid(
                    "dataset layout",
                    format!("window {w:?} is not an odd centered window of grid {:?}", self.grid),
                ));
            }
        }
        Ok(w)
    }

    /// File name of grid view `(u, v)`.
    pub fn file_name(&self, u: usize, v: usize) -> Result<String> {
        format_pattern(&self.pattern, u, v, v * self.grid[0] + u)
    }
}

fn format_pattern(pattern: &str, u: usize, v: usize, index: usize) -> Result<String> {
    let mut out = String::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| invalid("view pattern", "unclosed brace"))?
            + open;
        let spec = &rest[open + 1..close];
        let (name, width) = match spec.split_once(':') {
            Some((n, w)) => {
                let w = w
                    .strip_prefix('0')
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| invalid("view pattern", format!("bad width in {{{spec}}}")))?;
                (n, w)
            }
            None => (spec, 0),
        };
        let value = match name {
            "u" => u,
            "v" => v,
            "index" => index,
            other => return Err(invalid("view pattern", format!("unknown placeholder {other}"))),
        };
        out.push_str(&format!("{value:0width$}"));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// 8- or 16-bit PNG (or any format the `image` crate reads) as `[0, 1]` values.
/// Gray images give one channel, color images three; alpha is dropped.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() as u8 > 1;
    let t = match (gray, sixteen) {
        (true, false) => {
            let b = img.into_luma8();
            Tensor::from_fn(vec![w, h, 1], |i| b.get_pixel(i[0] as u32, i[1] as u32)[0] as f64 / 255.0)
        }
        (true, true) => {
            let b = img.into_luma16();
            Tensor::from_fn(vec![w, h, 1], |i| b.get_pixel(i[0] as u32, i[1] as u32)[0] as f64 / 65535.0)
        }
        (false, false) => {
            let b = img.into_rgb8();
            Tensor::from_fn(vec![w, h, 3], |i| b.get_pixel(i[0] as u32, i[1] as u32)[i[2]] as f64 / 255.0)
        }
        (false, true) => {
            let b = img.into_rgb16();
            Tensor::from_fn(vec![w, h, 3], |i| b.get_pixel(i[0] as u32, i[1] as u32)[i[2]] as f64 / 65535.0)
        }
    };
    Image::new(t)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit PNG of a one- or three-channel image.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let (w, h) = (img.nx() as u32, img.ny() as u32);
    let dynamic = match img.channels() {
        1 => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([to_u8(img.at(x as usize, y as usize, 0))])
        })),
        3 => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            let p = |c| to_u8(img.at(x as usize, y as usize, c));
            Rgb([p(0), p(1), p(2)])
        })),
        n => return Err(invalid("png export", format!("{n} channels; need 1 or 3"))),
    };
    dynamic.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// The light field rounded to 8-bit levels, as an 8-bit export stores it.
pub fn quantize_u8(lf: &LightField) -> Result<LightField> {
    LightField::new(lf.tensor().map(|v| to_u8(v) as f64 / 255.0))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub lightfield: LightField,
    pub ground_truth: Option<DisparityMap>,
    pub layout: DatasetLayout,
}

/// Loads the central window of views and any ground truth from `dir`.
pub fn load_lightfield(dir: &Path) -> Result<Dataset> {
    let layout = DatasetLayout::for_dir(dir)?;
    let [wu, wv] = layout.window()?;
    let (ou, ov) = ((layout.grid[0] - wu) / 2, (layout.grid[1] - wv) / 2);
    let mut views = Vec::with_capacity(wu * wv);
    for u in 0..wu {
        for v in 0..wv {
            let path = dir.join(layout.file_name(ou + u, ov + v)?);
            if !path.is_file() {
                return Err(Error::MissingView { u, v, path });
            }
            let img = read_image(&path)?;
            if let Some(first) = views.first() {
                img.check_same_shape(first, "light-field views").map_err(|_| Error::Format {
                    path: path.clone(),
                    msg: "resolution or channel count differs from the first view".into(),
                })?;
            }
            views.push(img);
        }
    }
    let lightfield = LightField::from_views(wu, wv, &views)?;
    let ground_truth = match &layout.ground_truth {
        Some(name) if dir.join(name).is_file() => {
            let gt = read_pfm(dir.join(name))?;
            let (nx, ny) = lightfield.spatial_size();
            gt.check_aligned(nx, ny, "ground truth")?;
            Some(gt)
        }
        _ => None,
    };
    Ok(Dataset {
        lightfield,
        ground_truth,
        layout,
    })
}

/// Writes views as 8-bit PNGs plus a descriptor and optional ground truth.
/// Returns the written view paths.
pub fn export_lightfield(dir: &Path, lf: &LightField, gt: Option<&DisparityMap>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (nu, nv) = lf.angular_size();
    let layout = DatasetLayout {
        pattern: "view_{u:02}_{v:02}.png".into(),
        grid: [nu, nv],
        window: None,
        ground_truth: gt.map(|_| "gt_disparity.pfm".to_string()),
        mode: None,
        disparity_range: None,
    };
    let mut paths = Vec::with_capacity(nu * nv);
    for u in 0..nu {
        for v in 0..nv {
            let path = dir.join(layout.file_name(u, v)?);
            write_image(&path, &lf.view(u, v)?)?;
            paths.push(path);
        }
    }
    if let (Some(gt), Some(name)) = (gt, &layout.ground_truth) {
        write_pfm(dir.join(name), gt)?;
    }
    let path = dir.join(LAYOUT_FILE);
    let text = toml::to_string(&layout).map_err(|e| invalid("layout", e.to_string()))?;
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(paths)
}
