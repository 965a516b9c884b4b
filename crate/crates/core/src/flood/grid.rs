use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zone membership of a terrain cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellZone {
    Zone(usize),
    /// Outlet cell: water reaching it leaves the domain.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    /// Marker written for elevations of boundary cells without data.
    pub nodata: f64,
    /// Row-major, `height` rows of `width` values.
    pub elevation: Vec<f64>,
    pub zone_of_cell: Vec<CellZone>,
}

impl TerrainGrid {
    pub fn new(
        width: usize,
        height: usize,
        cell_size_m: f64,
        elevation: Vec<f64>,
        zone_of_cell: Vec<CellZone>,
    ) -> Result<Self> {
        let grid = TerrainGrid {
            width,
            height,
            cell_size_m,
            nodata: -9999.0,
            elevation,
            zone_of_cell,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("terrain.dims", "grid must be non-empty"));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(Error::config("terrain.cellsize", "cell size must be positive"));
        }
        let n = self.width * self.height;
        if self.elevation.len() != n || self.zone_of_cell.len() != n {
            return Err(Error::Shape(format!(
                "terrain expects {n} cells, got {} elevations and {} zone ids",
                self.elevation.len(),
                self.zone_of_cell.len()
            )));
        }
        for (i, (&e, z)) in self.elevation.iter().zip(&self.zone_of_cell).enumerate() {
            if !e.is_finite() {
                return Err(Error::Data(format!("cell {i} has non-finite elevation")));
            }
            if e == self.nodata && *z != CellZone::Boundary {
                return Err(Error::Data(format!(
                    "cell {i} has no elevation data but is not a boundary cell"
                )));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_area_m2(&self) -> f64 {
        self.cell_size_m * self.cell_size_m
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.width, idx % self.width)
    }

    /// Number of zones referenced by the grid (max id + 1).
    pub fn zone_count(&self) -> usize {
        self.zone_of_cell
            .iter()
            .filter_map(|z| match z {
                CellZone::Zone(id) => Some(id + 1),
                CellZone::Boundary => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn zone_cell_counts(&self, zones: usize) -> Vec<usize> {
        let mut counts = vec![0; zones];
        for z in &self.zone_of_cell {
            if let CellZone::Zone(id) = *z {
                if id < zones {
                    counts[id] += 1;
                }
            }
        }
        counts
    }

    pub fn zone_areas_m2(&self, zones: usize) -> Vec<f64> {
        let a = self.cell_area_m2();
        self.zone_cell_counts(zones).into_iter().map(|c| c as f64 * a).collect()
    }

    /// Cell containing point `(x, y)` in metres, clamped to the grid.
    /// `x` grows with column index, `y` with row index.
    pub fn cell_at(&self, x: f64, y: f64) -> usize {
        let col = (x / self.cell_size_m).floor().clamp(0.0, (self.width - 1) as f64) as usize;
        let row = (y / self.cell_size_m).floor().clamp(0.0, (self.height - 1) as f64) as usize;
        self.index(row, col)
    }

    /// 4-connected in-grid neighbours.
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = self.row_col(idx);
        let w = self.width;
        let h = self.height;
        [
            (r > 0).then(|| idx - w),
            (c > 0).then(|| idx - 1),
            (c + 1 < w).then(|| idx + 1),
            (r + 1 < h).then(|| idx + w),
        ]
        .into_iter()
        .flatten()
    }

    pub fn is_edge(&self, idx: usize) -> bool {
        let (r, c) = self.row_col(idx);
        r == 0 || c == 0 || r + 1 == self.height || c + 1 == self.width
    }

    /// Plain-text grid format:
    ///
    /// ```text
    /// ncols <width>
    /// nrows <height>
    /// cellsize <metres>
    /// nodata <value>
    /// elevation
    /// <height rows of width whitespace-separated values>
    /// zones
    /// <height rows of width zone ids, -1 marks a boundary cell>
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.width);
        let _ = writeln!(out, "nrows {}", self.height);
        let _ = writeln!(out, "cellsize {}", self.cell_size_m);
        let _ = writeln!(out, "nodata {}", self.nodata);
        out.push_str("elevation\n");
        for row in self.elevation.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.push_str("zones\n");
        for row in self.zone_of_cell.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|z| match z {
                    CellZone::Zone(id) => id.to_string(),
                    CellZone::Boundary => "-1".to_string(),
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(source, 0, format!("missing `{key}` header")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::parse(source, n, format!("expected `{key}`")));
            }
            let value = parts
                .next()
                .ok_or_else(|| Error::parse(source, n, format!("`{key}` needs a value")))?;
            Ok((n, value.to_string()))
        };
        let (n, w) = header("ncols")?;
        let width: usize = w.parse().map_err(|_| Error::parse(source, n, "bad ncols"))?;
        let (n, h) = header("nrows")?;
        let height: usize = h.parse().map_err(|_| Error::parse(source, n, "bad nrows"))?;
        let (n, cs) = header("cellsize")?;
        let cell_size_m: f64 = cs.parse().map_err(|_| Error::parse(source, n, "bad cellsize"))?;
        let (n, nd) = header("nodata")?;
        let nodata: f64 = nd.parse().map_err(|_| Error::parse(source, n, "bad nodata"))?;

        let mut section = |name: &str| -> Result<Vec<(usize, String)>> {
            match lines.next() {
                Some((_, l)) if l == name => {}
                Some((n, _)) => return Err(Error::parse(source, n, format!("expected `{name}`"))),
                None => return Err(Error::parse(source, 0, format!("missing `{name}` section"))),
            }
            let mut rows = Vec::with_capacity(height);
            for _ in 0..height {
                let (n, l) = lines
                    .next()
                    .ok_or_else(|| Error::parse(source, 0, format!("`{name}` has too few rows")))?;
                rows.push((n, l.to_string()));
            }
            Ok(rows)
        };

        let mut elevation = Vec::with_capacity(width * height);
        for (n, row) in section("elevation")? {
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != width {
                return Err(Error::parse(source, n, format!("expected {width} values")));
            }
            for v in vals {
                elevation.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(source, n, format!("bad elevation `{v}`")))?,
                );
            }
        }
        let mut zone_of_cell = Vec::with_capacity(width * height);
        for (n, row) in section("zones")? {
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != width {
                return Err(Error::parse(source, n, format!("expected {width} zone ids")));
            }
            for v in vals {
                let id: i64 = v
                    .parse()
                    .map_err(|_| Error::parse(source, n, format!("bad zone id `{v}`")))?;
                zone_of_cell.push(if id < 0 {
                    CellZone::Boundary
                } else {
                    CellZone::Zone(id as usize)
                });
            }
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::parse(source, n, "trailing content after zones"));
        }
        let grid = TerrainGrid {
            width,
            height,
            cell_size_m,
            nodata,
            elevation,
            zone_of_cell,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}
