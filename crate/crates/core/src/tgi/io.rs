use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::signal::TimeGrid;

/// What an image file holds; recorded in its header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    Measured,
    Base,
    Predicted,
    Differential,
    Baseline,
}

impl ImageKind {
    fn as_str(self) -> &'static str {
        match self {
            ImageKind::Measured => "measured",
            ImageKind::Base => "base",
            ImageKind::Predicted => "predicted",
            ImageKind::Differential => "differential",
            ImageKind::Baseline => "baseline",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "measured" => ImageKind::Measured,
            "base" => ImageKind::Base,
            "predicted" => ImageKind::Predicted,
            "differential" => ImageKind::Differential,
            "baseline" => ImageKind::Baseline,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFile {
    pub image: Image,
    pub kind: ImageKind,
    pub config_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Row {
    t_ns: f64,
    m: f64,
    sigma: f64,
}

/// Writes `t_ns,m,sigma` rows after a `# kind=..,n=..,digest=..` line.
/// Floats use the shortest representation that parses back exactly.
pub fn write_image_csv(path: &Path, image: &Image, kind: ImageKind, config_digest: &str) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    writeln!(
        buf,
        "# kind={},n={},digest={}",
        kind.as_str(),
        image.n(),
        config_digest
    )
    .expect("writing to memory");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for (k, (m, sigma)) in image.m().iter().zip(image.sigma()).enumerate() {
            w.serialize(Row {
                t_ns: image.grid().time(k),
                m: *m,
                sigma: *sigma,
            })
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_image_csv(path: &Path) -> Result<ImageFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let (mut kind, mut n, mut digest) = (ImageKind::Measured, None, String::new());
    let mut body_start = 0;
    for line in text.lines() {
        let Some(meta) = line.strip_prefix('#') else { break };
        body_start += line.len() + 1;
        for field in meta.split(',') {
            let Some((key, value)) = field.trim().split_once('=') else { continue };
            match key {
                "kind" => kind = ImageKind::parse(value).ok_or_else(|| bad(format!("unknown image kind {value}")))?,
                "n" => n = Some(value.parse::<u64>().map_err(|e| bad(format!("bad n: {e}")))?),
                "digest" => digest = value.to_string(),
                _ => {}
            }
        }
    }
    let body = text.get(body_start.min(text.len())..).unwrap_or("");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_ns", "m", "sigma"] {
        return Err(bad(format!("expected columns t_ns,m,sigma, found {:?}", headers)));
    }
    let rows: Vec<Row> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(e.to_string()))?;
    if rows.len() < 2 {
        return Err(bad("need at least two rows".into()));
    }
    let dt = rows[1].t_ns - rows[0].t_ns;
    if rows[0].t_ns != 0.0 || !(dt > 0.0) {
        return Err(bad("time column must start at 0 and increase".into()));
    }
    for (k, r) in rows.iter().enumerate() {
        if (r.t_ns - k as f64 * dt).abs() > 1e-9 * dt.max(r.t_ns) {
            return Err(bad(format!("row {} is off the uniform grid", k + 1)));
        }
    }
    let grid = TimeGrid::new(rows.len() as f64 * dt, dt)?;
    let m = rows.iter().map(|r| r.m).collect();
    let sigma = rows.iter().map(|r| r.sigma).collect();
    let n = n.ok_or_else(|| bad("missing n in header".into()))?;
    Ok(ImageFile {
        image: Image::new(grid, m, sigma, n)?,
        kind,
        config_digest: digest,
    })
}
