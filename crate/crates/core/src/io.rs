//! File formats: CSV for grids and trajectory frames, JSON for scattering
//! data and reports.
//!
//! Every float is serialized with a fixed 17-significant-digit scientific
//! format, so identical runs produce byte-identical files and values
//! round-trip exactly through f64.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{KdvError, Result};
use crate::float::Cplx;
use crate::grid::GridPotential;
use crate::scatter::ScatteringData;

/// Version/config stamp embedded at the top of every output file.
#[derive(Clone, Debug, Default)]
pub struct FileMeta {
    pub version: String,
    pub config_sha256: String,
}

impl FileMeta {
    pub fn new(version: &str, config_sha256: &str) -> Self {
        FileMeta {
            version: version.to_string(),
            config_sha256: config_sha256.to_string(),
        }
    }

    fn comment_line(&self) -> String {
        format!("# kdvist {} config {}\n", self.version, self.config_sha256)
    }
}

/// Fixed 17-significant-digit representation; round-trips f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// serde_json formatter that pins every float to 17 significant digits.
struct FixedFloat;

impl serde_json::ser::Formatter for FixedFloat {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize any value as pretty JSON with deterministic float formatting.
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloat);
    value.serialize(&mut ser)?;
    let s = String::from_utf8(out).map_err(|e| KdvError::invalid(e.to_string()))?;
    Ok(s)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Potential as CSV `x,u` with an optional leading comment stamp.
pub fn write_grid_csv(path: &Path, pot: &GridPotential<f64>, meta: Option<&FileMeta>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    if let Some(m) = meta {
        f.write_all(m.comment_line().as_bytes())?;
    }
    f.write_all(b"x,u\n")?;
    for i in 0..pot.len() {
        writeln!(f, "{},{}", fmt_f64(pot.x_at(i)), fmt_f64(pot.values[i]))?;
    }
    Ok(())
}

/// Read a potential CSV (`x,u` header, `#` comments skipped); the grid must
/// be uniform. Decay metadata is inferred from the tails.
pub fn read_grid_csv(path: &Path) -> Result<GridPotential<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut xs: Vec<f64> = Vec::new();
    let mut us: Vec<f64> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| KdvError::Parse {
                path: path.display().to_string(),
                msg: format!("line {}: expected x,u", lineno + 1),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| KdvError::Parse {
                path: path.display().to_string(),
                msg: format!("line {}: {}", lineno + 1, e),
            })
        };
        xs.push(parse(parts.next())?);
        us.push(parse(parts.next())?);
    }
    if xs.len() < 16 {
        return Err(KdvError::Parse {
            path: path.display().to_string(),
            msg: "need at least 16 samples".into(),
        });
    }
    let dx = xs[1] - xs[0];
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.abs().max(1e-9) {
            return Err(KdvError::Parse {
                path: path.display().to_string(),
                msg: "grid must be uniform".into(),
            });
        }
    }
    GridPotential::from_samples_infer_decay(xs[0], dx, us)
}

/// GLM solution dump: CSV `y,B`.
pub fn write_glm_csv(
    path: &Path,
    ygrid: &[f64],
    b: &[f64],
    meta: Option<&FileMeta>,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    if let Some(m) = meta {
        f.write_all(m.comment_line().as_bytes())?;
    }
    f.write_all(b"y,B\n")?;
    for (y, v) in ygrid.iter().zip(b) {
        writeln!(f, "{},{}", fmt_f64(*y), fmt_f64(*v))?;
    }
    Ok(())
}

/// Trajectory frames: CSV `t,x,u` blocks.
pub fn write_frames_csv(
    path: &Path,
    frames: &[(f64, Vec<f64>, Vec<f64>)],
    meta: Option<&FileMeta>,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    if let Some(m) = meta {
        f.write_all(m.comment_line().as_bytes())?;
    }
    f.write_all(b"t,x,u\n")?;
    for (t, xs, us) in frames {
        for (x, u) in xs.iter().zip(us) {
            writeln!(f, "{},{},{}", fmt_f64(*t), fmt_f64(*x), fmt_f64(*u))?;
        }
    }
    Ok(())
}

/// JSON shape of scattering data:
/// {"kgrid":[...],"R_re":[...],"R_im":[...],"betas":[...],"gammas":[...],"time":t}
/// plus optional strip samples when they were computed.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct ScatteringDataFile {
    pub kgrid: Vec<f64>,
    #[serde(rename = "R_re")]
    pub r_re: Vec<f64>,
    #[serde(rename = "R_im")]
    pub r_im: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub time: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default, rename = "R_strip_re")]
    pub r_strip_re: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default, rename = "R_strip_im")]
    pub r_strip_im: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_sha256: Option<String>,
}

impl ScatteringDataFile {
    pub fn from_data(sd: &ScatteringData<f64>, meta: Option<&FileMeta>) -> Self {
        ScatteringDataFile {
            kgrid: sd.kgrid.clone(),
            r_re: sd.r.iter().map(|c| c.re).collect(),
            r_im: sd.r.iter().map(|c| c.im).collect(),
            betas: sd.betas.clone(),
            gammas: sd.gammas.clone(),
            time: sd.time,
            eps: None,
            r_strip_re: None,
            r_strip_im: None,
            version: meta.map(|m| m.version.clone()),
            config_sha256: meta.map(|m| m.config_sha256.clone()),
        }
    }

    pub fn to_data(&self) -> Result<ScatteringData<f64>> {
        if self.r_re.len() != self.kgrid.len() || self.r_im.len() != self.kgrid.len() {
            return Err(KdvError::invalid("R_re/R_im must match kgrid length"));
        }
        let sd = ScatteringData {
            kgrid: self.kgrid.clone(),
            r: self
                .r_re
                .iter()
                .zip(&self.r_im)
                .map(|(&re, &im)| Cplx::new(re, im))
                .collect(),
            betas: self.betas.clone(),
            gammas: self.gammas.clone(),
            time: self.time,
        };
        sd.validate(1e-6)?;
        Ok(sd)
    }

    pub fn strip_samples(&self) -> Option<(f64, Vec<Cplx<f64>>)> {
        match (&self.eps, &self.r_strip_re, &self.r_strip_im) {
            (Some(eps), Some(re), Some(im)) if re.len() == im.len() => Some((
                *eps,
                re.iter().zip(im).map(|(&a, &b)| Cplx::new(a, b)).collect(),
            )),
            _ => None,
        }
    }
}

pub fn read_scattering_json(path: &Path) -> Result<ScatteringDataFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_format_roundtrips() {
        for &v in &[0.1, -2.0 / 3.0, 1e-300, std::f64::consts::PI, 4.0 * (0.8f64).exp()] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
    }

    #[test]
    fn json_floats_fixed_width() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: Vec<f64>,
        }
        let s = to_json_string(&S {
            a: 0.1,
            b: vec![1.0, f64::NAN],
        })
        .unwrap();
        assert!(s.contains("1.0000000000000001e-1"));
        assert!(s.contains("null"));
    }

    #[test]
    fn grid_csv_roundtrip() {
        let dir = std::env::temp_dir().join("kdvist_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pot.csv");
        let pot = GridPotential::from_fn(5.0, 0.25, 1.0, 3.0, |x: f64| {
            -2.0 / x.cosh().powi(2)
        })
        .unwrap();
        let meta = FileMeta::new("0.0.0", "deadbeef");
        write_grid_csv(&path, &pot, Some(&meta)).unwrap();
        let back = read_grid_csv(&path).unwrap();
        assert_eq!(back.len(), pot.len());
        for i in 0..pot.len() {
            assert_eq!(back.values[i], pot.values[i]);
            assert_eq!(back.x_at(i), pot.x_at(i));
        }
    }

    #[test]
    fn scattering_json_roundtrip() {
        let sd = ScatteringData {
            kgrid: vec![-0.5, 0.5],
            r: vec![Cplx::new(0.1, -0.2), Cplx::new(0.1, 0.2)],
            betas: vec![1.0],
            gammas: vec![2.0],
            time: 0.25,
        };
        let file = ScatteringDataFile::from_data(&sd, None);
        let s = to_json_string(&file).unwrap();
        let parsed: ScatteringDataFile = serde_json::from_str(&s).unwrap();
        let back = parsed.to_data().unwrap();
        assert_eq!(back.kgrid, sd.kgrid);
        assert_eq!(back.r[0], sd.r[0]);
        assert_eq!(back.time, sd.time);
    }
}
