//! On-disk artifacts: the "AJPA" binary array container, model checkpoints,
//! dataset directories, CSV reports, and minimal SVG plots.
//!
//! Every binary file starts with the magic bytes `AJPA`, one format-version
//! byte, and a little-endian header describing array names, shapes, and
//! element type (f32 or f64); array data follows row-major in header order.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::Error;
use crate::model::{AeroJepaModel, ModelConfig};
use crate::numerics::{Scalar, Tensor};
use crate::synthgen::{Case, Conditions, Dataset, DatasetEntry, DesignParams, Split};
use crate::Result;

pub const MAGIC: [u8; 4] = *b"AJPA";
pub const FORMAT_VERSION: u8 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

fn dtype_of<T: Scalar>() -> Result<u8> {
    match std::mem::size_of::<T>() {
        4 => Ok(DTYPE_F32),
        8 => Ok(DTYPE_F64),
        n => Err(Error::Format(format!("unsupported element size {n}"))),
    }
}

/// Serialize named arrays into an AJPA byte buffer.
pub fn arrays_to_bytes<T: Scalar>(arrays: &[(String, Tensor<T>)]) -> Result<Vec<u8>> {
    let dtype = dtype_of::<T>()?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, t) in arrays {
        let nb = name.as_bytes();
        if nb.len() > u16::MAX as usize {
            return Err(Error::Format(format!("array name too long: {name}")));
        }
        out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        out.extend_from_slice(nb);
        out.push(dtype);
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
    }
    for (_, t) in arrays {
        for &v in t.data() {
            match dtype {
                DTYPE_F32 => out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes()),
                _ => out.extend_from_slice(&v.to_f64_lossy().to_le_bytes()),
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated file: needed {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Parse an AJPA byte buffer back into named arrays.
pub fn arrays_from_bytes<T: Scalar>(buf: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let want_dtype = dtype_of::<T>()?;
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic bytes (not an AJPA file)".into()));
    }
    let version = cur.u8()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format version {version} unsupported (expected {FORMAT_VERSION})"
        )));
    }
    let count = cur.u32()? as usize;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Format("non-utf8 array name".into()))?
            .to_string();
        let dtype = cur.u8()?;
        if dtype != DTYPE_F32 && dtype != DTYPE_F64 {
            return Err(Error::Format(format!("unknown dtype code {dtype}")));
        }
        if dtype != want_dtype {
            return Err(Error::Format(format!(
                "array {name} stored as {}, requested {}",
                if dtype == DTYPE_F32 { "f32" } else { "f64" },
                if want_dtype == DTYPE_F32 { "f32" } else { "f64" },
            )));
        }
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        headers.push((name, rows, cols));
    }
    let mut arrays = Vec::with_capacity(count);
    for (name, rows, cols) in headers {
        let n = rows * cols;
        let mut data = Vec::with_capacity(n);
        match want_dtype {
            DTYPE_F32 => {
                for _ in 0..n {
                    let v = f32::from_le_bytes(cur.take(4)?.try_into().unwrap());
                    data.push(Scalar::from_f64(v as f64));
                }
            }
            _ => {
                for _ in 0..n {
                    let v = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
                    data.push(Scalar::from_f64(v));
                }
            }
        }
        arrays.push((name, Tensor::new(rows, cols, data)?));
    }
    if cur.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after arrays",
            buf.len() - cur.pos
        )));
    }
    Ok(arrays)
}

/// Write named arrays to an AJPA file.
pub fn write_arrays<T: Scalar>(path: &Path, arrays: &[(String, Tensor<T>)]) -> Result<()> {
    let bytes = arrays_to_bytes(arrays)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Read named arrays from an AJPA file.
pub fn read_arrays<T: Scalar>(path: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let buf = fs::read(path)?;
    arrays_from_bytes(&buf)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CONFIG_KEY: &str = "__config";

/// Fixed-order numeric encoding of the architecture configuration.
pub fn config_to_row(c: &ModelConfig) -> Tensor<f64> {
    Tensor::row_vec(vec![
        c.num_tokens as f64,
        c.token_dim as f64,
        c.encoder_depth as f64,
        c.predictor_depth as f64,
        c.decoder_depth as f64,
        c.num_heads as f64,
        c.neighborhood as f64,
        c.fourier_bands as f64,
        c.tokenizer_k as f64,
        c.tokenizer_hidden as f64,
        c.decoder_hidden as f64,
        c.cond_dim as f64,
        c.spatial_dim as f64,
        c.field_channels as f64,
        if c.use_sdf { 1.0 } else { 0.0 },
    ])
}

pub fn config_from_row(row: &Tensor<f64>) -> Result<ModelConfig> {
    if row.rows() != 1 || row.cols() != 15 {
        return Err(Error::Format(format!(
            "config row has shape {:?}, expected [1, 15]",
            row.shape()
        )));
    }
    let g = |i: usize| row.at(0, i) as usize;
    Ok(ModelConfig {
        num_tokens: g(0),
        token_dim: g(1),
        encoder_depth: g(2),
        predictor_depth: g(3),
        decoder_depth: g(4),
        num_heads: g(5),
        neighborhood: g(6),
        fourier_bands: g(7),
        tokenizer_k: g(8),
        tokenizer_hidden: g(9),
        decoder_hidden: g(10),
        cond_dim: g(11),
        spatial_dim: g(12),
        field_channels: g(13),
        use_sdf: row.at(0, 14) != 0.0,
    })
}

/// Save model configuration and every parameter tensor.
pub fn save_checkpoint(path: &Path, model: &AeroJepaModel<f64>) -> Result<()> {
    let mut arrays = vec![(CONFIG_KEY.to_string(), config_to_row(&model.config))];
    for id in model.params.ids() {
        arrays.push((model.params.name(id).to_string(), model.params.get(id).clone()));
    }
    write_arrays(path, &arrays)
}

/// Load a checkpoint, rebuilding the architecture from the stored config and
/// overwriting its parameters. Fails with the first array whose shape does
/// not match the architecture.
pub fn load_checkpoint(path: &Path) -> Result<AeroJepaModel<f64>> {
    let arrays = read_arrays::<f64>(path)?;
    let (first_name, config_row) = arrays
        .first()
        .ok_or_else(|| Error::Format("empty checkpoint".into()))?;
    if first_name != CONFIG_KEY {
        return Err(Error::Format(format!(
            "first checkpoint array is {first_name}, expected {CONFIG_KEY}"
        )));
    }
    let config = config_from_row(config_row)?;
    let mut model = AeroJepaModel::<f64>::new(config, 0)?;
    let stored: Vec<&(String, Tensor<f64>)> = arrays.iter().skip(1).collect();
    if stored.len() != model.params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameter arrays, architecture has {}",
            stored.len(),
            model.params.len()
        )));
    }
    for (id, (name, tensor)) in model.params.ids().collect::<Vec<_>>().into_iter().zip(stored) {
        if model.params.name(id) != name {
            return Err(Error::Format(format!(
                "parameter order mismatch: found {name}, expected {}",
                model.params.name(id)
            )));
        }
        if model.params.get(id).shape() != tensor.shape() {
            return Err(Error::Format(format!(
                "shape mismatch for {name}: stored {:?}, architecture {:?}",
                tensor.shape(),
                model.params.get(id).shape()
            )));
        }
        *model.params.get_mut(id) = tensor.clone();
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Dataset directory
// ---------------------------------------------------------------------------

/// Write a dataset as `manifest.csv` + one AJPA block per case.
pub fn save_dataset(dir: &Path, dataset: &Dataset, force: bool) -> Result<()> {
    if dir.exists() {
        if !force {
            return Err(Error::Usage(format!(
                "output path {} exists; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    let header = [
        "case_id",
        "design_id",
        "split",
        "thickness",
        "camber",
        "alpha",
        "mach",
        "cl",
        "cd",
        "resolution",
    ];
    let rows: Vec<Vec<String>> = dataset
        .entries
        .iter()
        .map(|e| {
            vec![
                e.case_id.to_string(),
                e.design_id.to_string(),
                e.split.tag().to_string(),
                e.case.design.thickness.to_string(),
                e.case.design.camber.to_string(),
                e.case.conditions.alpha.to_string(),
                e.case.conditions.mach.to_string(),
                e.case.coeffs.0.to_string(),
                e.case.coeffs.1.to_string(),
                dataset.resolution.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("manifest.csv"), &header, &rows)?;
    for e in &dataset.entries {
        let arrays = vec![
            ("coords".to_string(), e.case.geometry.coords().clone()),
            (
                "cp".to_string(),
                e.case
                    .field
                    .features()
                    .ok_or_else(|| Error::Contract("case field lacks channels".into()))?
                    .clone(),
            ),
        ];
        write_arrays(&dir.join(format!("case_{:05}.ajpa", e.case_id)), &arrays)?;
    }
    Ok(())
}

/// Load a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = dir.join("manifest.csv");
    if !manifest.exists() {
        return Err(Error::Usage(format!(
            "no manifest at {}; produce the dataset with the gen command first",
            manifest.display()
        )));
    }
    let (header, rows) = read_csv(&manifest)?;
    let idx = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("manifest missing column {name}")))
    };
    let (ci, di, si) = (idx("case_id")?, idx("design_id")?, idx("split")?);
    let (ti, mi) = (idx("thickness")?, idx("camber")?);
    let (ai, mai) = (idx("alpha")?, idx("mach")?);
    let (cli, cdi, ri) = (idx("cl")?, idx("cd")?, idx("resolution")?);
    let pf = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad number in manifest: {s}")))
    };
    let mut entries = Vec::with_capacity(rows.len());
    let mut resolution = 0usize;
    for row in &rows {
        let case_id: usize = row[ci]
            .parse()
            .map_err(|_| Error::Format(format!("bad case id {}", row[ci])))?;
        let design_id: usize = row[di]
            .parse()
            .map_err(|_| Error::Format(format!("bad design id {}", row[di])))?;
        resolution = row[ri]
            .parse()
            .map_err(|_| Error::Format(format!("bad resolution {}", row[ri])))?;
        let arrays = read_arrays::<f64>(&dir.join(format!("case_{case_id:05}.ajpa")))?;
        let mut coords = None;
        let mut cp = None;
        for (name, t) in arrays {
            match name.as_str() {
                "coords" => coords = Some(t),
                "cp" => cp = Some(t),
                other => return Err(Error::Format(format!("unexpected array {other}"))),
            }
        }
        let coords = coords.ok_or_else(|| Error::Format("case block lacks coords".into()))?;
        let cp = cp.ok_or_else(|| Error::Format("case block lacks cp".into()))?;
        let geometry = crate::geometry::PointCloud::new(coords.clone(), None, false)?;
        let field = crate::geometry::PointCloud::new(coords, Some(cp), true)?;
        entries.push(DatasetEntry {
            case_id,
            design_id,
            split: Split::from_tag(&row[si])?,
            case: Case {
                design: DesignParams {
                    thickness: pf(&row[ti])?,
                    camber: pf(&row[mi])?,
                },
                conditions: Conditions {
                    alpha: pf(&row[ai])?,
                    mach: pf(&row[mai])?,
                },
                geometry,
                field,
                coeffs: (pf(&row[cli])?, pf(&row[cdi])?),
            },
        });
    }
    Ok(Dataset {
        entries,
        resolution,
    })
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Write a CSV file with a header; values containing commas/quotes/newlines
/// are quoted.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    let escape = |s: &str| -> String {
        if s.contains(',') || s.contains('"') || s.contains('\n') {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    out.push_str(&header.iter().map(|h| escape(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|v| escape(v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a CSV file written by [`write_csv`] (quoted fields supported).
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let mut fields = Vec::new();
        let mut cur = String::new();
        let mut in_quotes = false;
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '"' if in_quotes => {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        cur.push('"');
                    } else {
                        in_quotes = false;
                    }
                }
                '"' => in_quotes = true,
                ',' if !in_quotes => {
                    fields.push(std::mem::take(&mut cur));
                }
                c => cur.push(c),
            }
        }
        fields.push(cur);
        lines.push(fields);
    }
    if lines.is_empty() {
        return Err(Error::Format(format!("empty CSV {}", path.display())));
    }
    let header = lines.remove(0);
    Ok((header, lines))
}

// ---------------------------------------------------------------------------
// Minimal SVG plots
// ---------------------------------------------------------------------------

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn svg_axes(title: &str, xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
            "<rect x=\"{m}\" y=\"{m}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" ",
            "stroke=\"black\"/>\n",
            "<text x=\"{m}\" y=\"{h2}\" font-size=\"10\">{xmin:.3} .. {xmax:.3}</text>\n",
            "<text x=\"5\" y=\"{m}\" font-size=\"10\">{ymin:.3} .. {ymax:.3}</text>\n",
        ),
        w = SVG_W,
        h = SVG_H,
        tx = SVG_W / 2.0,
        title = title,
        m = MARGIN,
        pw = SVG_W - 2.0 * MARGIN,
        ph = SVG_H - 2.0 * MARGIN,
        h2 = SVG_H - MARGIN / 2.0,
        xmin = xmin,
        xmax = xmax,
        ymin = ymin,
        ymax = ymax,
    )
}

fn data_bounds(series: &[(String, Vec<(f64, f64)>)]) -> (f64, f64, f64, f64) {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for (_, pts) in series {
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        let pad = |a: f64, b: f64| if a == b { (a - 0.5, b + 0.5) } else { (a, b) };
        let (xmin, xmax) = pad(xmin, xmax);
        let (ymin, ymax) = pad(ymin, ymax);
        (xmin, xmax, ymin, ymax)
    }
}

fn svg_plot(path: &Path, title: &str, series: &[(String, Vec<(f64, f64)>)], lines: bool) -> Result<()> {
    let (xmin, xmax, ymin, ymax) = data_bounds(series);
    let sx = |x: f64| MARGIN + (x - xmin) / (xmax - xmin) * (SVG_W - 2.0 * MARGIN);
    let sy = |y: f64| SVG_H - MARGIN - (y - ymin) / (ymax - ymin) * (SVG_H - 2.0 * MARGIN);
    let mut svg = svg_axes(title, xmin, xmax, ymin, ymax);
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if lines {
            let path_d: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(j, &(x, y))| {
                    format!("{}{:.2},{:.2}", if j == 0 { "M" } else { "L" }, sx(x), sy(y))
                })
                .collect();
            svg.push_str(&format!(
                "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                path_d.join(" "),
                color
            ));
        } else {
            for &(x, y) in pts {
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\"/>\n",
                    sx(x),
                    sy(y),
                    color
                ));
            }
        }
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            SVG_W - MARGIN - 150.0,
            MARGIN + 15.0 * (i as f64 + 1.0),
            color,
            label
        ));
    }
    svg.push_str("</svg>\n");
    let mut f = fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}

/// Write a line plot of one or more (x, y) series.
pub fn write_line_svg(path: &Path, title: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    svg_plot(path, title, series, true)
}

/// Write a scatter plot of one or more (x, y) series.
pub fn write_scatter_svg(
    path: &Path,
    title: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    svg_plot(path, title, series, false)
}
