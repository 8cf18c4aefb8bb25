//! File formats: raw little-endian float32 payloads with `key=value`
//! sidecars, and a CSV view table for projection stacks.
//!
//! Values are stored as f32. Anything that was read from disk (or is
//! otherwise f32-representable) round-trips bit-exactly.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{AcquisitionGeometry, Beam, View};
use crate::grid::{ScalarField3, Vec3, VoxelGrid3};
use crate::projection::ProjectionSet;
use crate::volume::EventVolume;

pub use config::{InitMode, Method, NoiseModel, PhantomKind, RunConfig};

/// `<path>` with its extension replaced by `.meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

fn views_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_views.csv"))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn encode_f32(path: &Path, values: &[f64]) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for (i, &v) in values.iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::format(path, format!("value {v} at index {i} is not representable as a finite f32")));
        }
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    Ok(bytes)
}

fn decode_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, sidecar implies {} ({} values)", bytes.len(), expected * 4, expected),
        ));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::format(path, format!("non-finite value at index {i}")))
            }
        })
        .collect()
}

fn write_payload(path: &Path, values: &[f64]) -> Result<()> {
    let bytes = encode_f32(path, values)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parsed `key=value` sidecar.
struct Meta {
    path: PathBuf,
    map: BTreeMap<String, String>,
}

impl Meta {
    fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("line {}: expected key=value", n + 1)))?;
            map.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        Ok(Self { path: path.to_owned(), map })
    }

    fn str(&self, key: &str) -> Result<&str> {
        self.map.get(key).map(String::as_str).ok_or_else(|| Error::format(&self.path, format!("missing key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let s = self.str(key)?;
        s.parse().map_err(|_| Error::format(&self.path, format!("cannot parse `{key}={s}`")))
    }

    fn vec3(&self, key: &str) -> Result<Vec3> {
        let s = self.str(key)?;
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(&self.path, format!("cannot parse `{key}={s}`")))?;
        match parts[..] {
            [x, y, z] => Ok(Vec3::new(x, y, z)),
            _ => Err(Error::format(&self.path, format!("`{key}` needs three comma-separated values"))),
        }
    }
}

fn grid_meta(grid: &VoxelGrid3, unit: &str) -> String {
    let o = grid.origin;
    format!(
        "nx={}\nny={}\nnz={}\nvoxel_size_mm={}\norigin_mm={},{},{}\nunit={unit}\n",
        grid.nx, grid.ny, grid.nz, grid.voxel_size, o.x, o.y, o.z
    )
}

/// Writes `path` (raw float32, x fastest) and its `.meta` sidecar.
pub fn write_volume(path: &Path, field: &ScalarField3, unit: &str) -> Result<()> {
    write_payload(path, field.values())?;
    write_text(&meta_path(path), &grid_meta(field.grid(), unit))
}

pub fn read_volume(path: &Path) -> Result<ScalarField3> {
    let meta = Meta::read(&meta_path(path))?;
    let grid = VoxelGrid3::new(
        meta.parse("nx")?,
        meta.parse("ny")?,
        meta.parse("nz")?,
        meta.parse("voxel_size_mm")?,
        meta.vec3("origin_mm")?,
    )
    .map_err(|e| Error::format(&meta.path, e.to_string()))?;
    let values = decode_f32(path, grid.len())?;
    ScalarField3::from_values(grid, values)
}

/// The three component files of an event volume stored under `stem`.
pub fn event_volume_paths(stem: &Path) -> [PathBuf; 3] {
    let s = stem.to_string_lossy();
    [
        PathBuf::from(format!("{s}_mu0.raw")),
        PathBuf::from(format!("{s}_mu1.raw")),
        PathBuf::from(format!("{s}_tstar.raw")),
    ]
}

pub fn write_event_volume(stem: &Path, vol: &EventVolume) -> Result<()> {
    let [p0, p1, pt] = event_volume_paths(stem);
    write_volume(&p0, &vol.mu0, "1/cm")?;
    write_volume(&p1, &vol.mu1, "1/cm")?;
    write_volume(&pt, &vol.tstar, "rotations")
}

pub fn read_event_volume(stem: &Path) -> Result<EventVolume> {
    let [p0, p1, pt] = event_volume_paths(stem);
    EventVolume::new(read_volume(&p0)?, read_volume(&p1)?, read_volume(&pt)?)
}

/// Writes the stack to `path`, geometry to `.meta`, and the per-view
/// angles and times to `<stem>_views.csv`.
pub fn write_projections(path: &Path, proj: &ProjectionSet) -> Result<()> {
    let g = proj.geometry();
    write_payload(path, proj.data())?;
    let mut meta = String::new();
    match g.beam {
        Beam::Parallel => meta.push_str("beam=parallel\n"),
        Beam::Cone { source_to_origin } => {
            let _ = write!(meta, "beam=cone\nsource_to_origin_mm={source_to_origin}\n");
        }
    }
    let _ = write!(
        meta,
        "origin_to_detector_mm={}\ndet_rows={}\ndet_cols={}\npixel_pitch_mm={}\nprojections_per_rotation={}\nn_views={}\nunit=optical_depth\n",
        g.origin_to_detector,
        g.det_rows,
        g.det_cols,
        g.pixel_pitch,
        g.projections_per_rotation,
        g.n_views()
    );
    write_text(&meta_path(path), &meta)?;
    let mut table = String::from("index,angle_rad,time_rotations\n");
    for (i, v) in g.views().iter().enumerate() {
        let _ = writeln!(table, "{i},{},{}", v.angle, v.time);
    }
    write_text(&views_path(path), &table)
}

fn read_view_table(path: &Path, n_views: usize) -> Result<Vec<View>> {
    let text = read_text(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "index,angle_rad,time_rotations" => {}
        _ => return Err(Error::format(path, "expected header `index,angle_rad,time_rotations`")),
    }
    let mut views = Vec::with_capacity(n_views);
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::format(path, format!("row {}: expected `index,angle,time`", n + 1));
        if cols.len() != 3 || cols[0].parse::<usize>().ok() != Some(n) {
            return Err(bad());
        }
        let angle: f64 = cols[1].parse().map_err(|_| bad())?;
        let time: f64 = cols[2].parse().map_err(|_| bad())?;
        views.push(View { angle, time });
    }
    if views.len() != n_views {
        return Err(Error::format(path, format!("{} views listed, sidecar says {n_views}", views.len())));
    }
    if views.windows(2).any(|w| w[1].time <= w[0].time) {
        return Err(Error::format(path, "view times must be strictly increasing"));
    }
    Ok(views)
}

pub fn read_projections(path: &Path) -> Result<ProjectionSet> {
    let meta = Meta::read(&meta_path(path))?;
    let beam = match meta.str("beam")? {
        "parallel" => Beam::Parallel,
        "cone" => Beam::Cone { source_to_origin: meta.parse("source_to_origin_mm")? },
        other => return Err(Error::format(&meta.path, format!("unknown beam `{other}`"))),
    };
    let n_views: usize = meta.parse("n_views")?;
    let views = read_view_table(&views_path(path), n_views)?;
    let geometry = AcquisitionGeometry::new(
        beam,
        meta.parse("origin_to_detector_mm")?,
        meta.parse("det_rows")?,
        meta.parse("det_cols")?,
        meta.parse("pixel_pitch_mm")?,
        meta.parse("projections_per_rotation")?,
        views,
    )
    .map_err(|e| Error::format(&meta.path, e.to_string()))?;
    let data = decode_f32(path, geometry.n_views() * geometry.pixels_per_view())?;
    ProjectionSet::from_data(geometry, data)
}

/// Residual trace as `iteration,residual` rows.
pub fn write_residuals(path: &Path, residuals: &[f64]) -> Result<()> {
    let mut s = String::from("iteration,residual\n");
    for (i, r) in residuals.iter().enumerate() {
        let _ = writeln!(s, "{i},{r}");
    }
    write_text(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> ScalarField3 {
        let grid = VoxelGrid3::new(3, 2, 2, 0.5, Vec3::new(-1.0, 2.0, 0.25)).unwrap();
        let values = (0..grid.len()).map(|i| (i as f32 * 0.37 - 1.5) as f64).collect();
        ScalarField3::from_values(grid, values).unwrap()
    }

    #[test]
    fn volume_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.raw");
        let f = field();
        write_volume(&p, &f, "1/cm").unwrap();
        let back = read_volume(&p).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let meta = fs::read_to_string(dir.path().join("v.meta")).unwrap();
        assert!(meta.contains("nx=3\n") && meta.contains("unit=1/cm\n"));
    }

    #[test]
    fn one_is_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.raw");
        let grid = VoxelGrid3::cube(1, 1.0).unwrap();
        write_volume(&p, &ScalarField3::filled(grid, 1.0), "1/cm").unwrap();
        assert_eq!(fs::read(&p).unwrap(), vec![0x00, 0x00, 0x80, 0x3F]);
    }

    #[test]
    fn truncated_and_non_finite_payloads_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.raw");
        write_volume(&p, &field(), "1/cm").unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format { .. })));
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format { .. })));
        let huge = ScalarField3::filled(VoxelGrid3::cube(1, 1.0).unwrap(), 1e300);
        assert!(write_volume(&p, &huge, "1/cm").is_err());
    }

    #[test]
    fn event_volume_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("phantom");
        let grid = VoxelGrid3::cube(2, 1.0).unwrap();
        let vol = EventVolume::uniform(grid, 0.25, 0.75, 1.5);
        write_event_volume(&stem, &vol).unwrap();
        assert!(dir.path().join("phantom_tstar.meta").exists());
        assert_eq!(read_event_volume(&stem).unwrap(), vol);
    }

    #[test]
    fn projection_round_trip_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("proj.raw");
        let g =
            AcquisitionGeometry::circular(Beam::Cone { source_to_origin: 50.0 }, 20.0, 2, 2, 0.5, 3, 3, 0.1).unwrap();
        let data: Vec<f64> = (0..12).map(|i| (i as f32 * 0.125) as f64).collect();
        let proj = ProjectionSet::from_data(g, data).unwrap();
        write_projections(&p, &proj).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 48);
        let back = read_projections(&p).unwrap();
        assert_eq!(back, proj);
        fs::remove_file(dir.path().join("proj_views.csv")).unwrap();
        assert!(read_projections(&p).is_err());
    }

    #[test]
    fn non_monotone_view_table_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("proj.raw");
        let g = AcquisitionGeometry::circular(Beam::Parallel, 0.0, 1, 1, 1.0, 4, 3, 0.0).unwrap();
        write_projections(&p, &ProjectionSet::zeros(g)).unwrap();
        let table = "index,angle_rad,time_rotations\n0,0,0\n1,1,0.5\n2,2,0.25\n";
        fs::write(dir.path().join("proj_views.csv"), table).unwrap();
        assert!(read_projections(&p).is_err());
    }
}
