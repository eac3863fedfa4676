//! Binary PGM maps with a small `key: value` metadata sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::geometry::Point2;
use crate::grid::{CellClass, GridError, OccupancyGrid, FREE_THRESH, OCCUPIED_THRESH};

const PIX_OCC: u8 = 0;
const PIX_FREE: u8 = 254;
const PIX_UNKNOWN: u8 = 205;

/// Paths written by [`save_map`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapFiles {
    pub image: PathBuf,
    pub metadata: PathBuf,
}

fn pixel(class: CellClass) -> u8 {
    match class {
        CellClass::Occupied => PIX_OCC,
        CellClass::Free => PIX_FREE,
        CellClass::Unknown => PIX_UNKNOWN,
    }
}

/// P5 image of the trinarized grid. The first image row is the top (max-y) grid row.
pub fn encode_pgm(grid: &OccupancyGrid) -> Vec<u8> {
    let (w, h) = (grid.width(), grid.height());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h);
    for row in (0..h).rev() {
        out.extend(
            grid.cells()[row * w..(row + 1) * w]
                .iter()
                .map(|&l| pixel(CellClass::of_logodds(l))),
        );
    }
    out
}

/// Parses a P5 image into `(width, height, classes)` with classes in grid order
/// (row 0 at the bottom).
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<CellClass>), GridError> {
    let mut pos = 0;
    let mut token = || -> Result<String, GridError> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(GridError::Malformed("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(GridError::Malformed("not a binary PGM (P5)".into()));
    }
    let mut number = |what: &str| -> Result<usize, GridError> {
        let t = token()?;
        t.parse()
            .map_err(|_| GridError::Malformed(format!("bad {what} {t:?}")))
    };
    let w = number("width")?;
    let h = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(GridError::Malformed(format!("maxval {maxval}, expected 255")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data_start = pos + 1;
    if data_start > bytes.len() {
        return Err(GridError::Malformed("missing raster".into()));
    }
    let data = &bytes[data_start..];
    let expected = w * h;
    if data.len() < expected {
        return Err(GridError::Malformed(format!(
            "raster truncated: {} of {expected} bytes",
            data.len()
        )));
    }
    if data.len() > expected {
        return Err(GridError::DimensionMismatch {
            expected,
            found: data.len(),
        });
    }
    let mut classes = vec![CellClass::Unknown; expected];
    for (i, &v) in data.iter().enumerate() {
        let class = match v {
            PIX_OCC => CellClass::Occupied,
            PIX_FREE => CellClass::Free,
            PIX_UNKNOWN => CellClass::Unknown,
            _ => {
                return Err(GridError::UnknownPixel {
                    value: v,
                    offset: data_start + i,
                })
            }
        };
        let (img_row, col) = (i / w, i % w);
        classes[(h - 1 - img_row) * w + col] = class;
    }
    Ok((w, h, classes))
}

/// Sidecar text for a map whose image file is called `image`.
pub fn map_metadata(grid: &OccupancyGrid, image: &str) -> String {
    let o = grid.origin();
    let mut s = String::new();
    writeln!(s, "image: {image}").unwrap();
    writeln!(s, "resolution: {}", grid.resolution()).unwrap();
    writeln!(s, "origin: [{}, {}, 0]", o.x, o.y).unwrap();
    writeln!(s, "occupied_thresh: {OCCUPIED_THRESH}").unwrap();
    writeln!(s, "free_thresh: {FREE_THRESH}").unwrap();
    s
}

/// Writes `<stem>.pgm` and `<stem>.yaml`.
pub fn save_map(grid: &OccupancyGrid, stem: impl AsRef<Path>) -> Result<MapFiles, GridError> {
    let stem = stem.as_ref();
    let image = stem.with_extension("pgm");
    let metadata = stem.with_extension("yaml");
    let name = image
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| GridError::Malformed(format!("bad map path {}", stem.display())))?;
    std::fs::write(&image, encode_pgm(grid))?;
    std::fs::write(&metadata, map_metadata(grid, name))?;
    Ok(MapFiles { image, metadata })
}

struct Metadata {
    image: String,
    resolution: f64,
    origin: Point2,
}

fn parse_metadata(text: &str) -> Result<Metadata, GridError> {
    let bad = |m: String| GridError::Malformed(m);
    let (mut image, mut resolution, mut origin) = (None, None, None);
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| bad(format!("metadata line {}: expected `key: value`", n + 1)))?;
        let value = value.trim();
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("metadata line {}: bad number {v:?}", n + 1)))
        };
        match key.trim() {
            "image" => image = Some(value.to_string()),
            "resolution" => resolution = Some(num(value)?),
            "origin" => {
                let inner = value
                    .strip_prefix('[')
                    .and_then(|v| v.strip_suffix(']'))
                    .ok_or_else(|| bad(format!("metadata line {}: origin must be [x, y, theta]", n + 1)))?;
                let parts = inner.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
                if parts.len() != 3 {
                    return Err(bad(format!("metadata line {}: origin needs 3 values", n + 1)));
                }
                if parts[2] != 0.0 {
                    return Err(bad("rotated map origins are not supported".into()));
                }
                origin = Some(Point2::new(parts[0], parts[1]));
            }
            "occupied_thresh" | "free_thresh" => {
                num(value)?;
            }
            _ => {}
        }
    }
    let resolution = resolution.ok_or_else(|| bad("metadata missing resolution".into()))?;
    if !(resolution > 0.0) {
        return Err(bad(format!("resolution must be positive, got {resolution}")));
    }
    Ok(Metadata {
        image: image.ok_or_else(|| bad("metadata missing image".into()))?,
        resolution,
        origin: origin.ok_or_else(|| bad("metadata missing origin".into()))?,
    })
}

/// Loads a map from its sidecar, or from the image when a `.yaml` sibling exists.
/// Cells come back as canonical trinary log-odds.
pub fn load_map(path: impl AsRef<Path>) -> Result<OccupancyGrid, GridError> {
    let path = path.as_ref();
    let meta_path = if path.extension().is_some_and(|e| e == "pgm") {
        path.with_extension("yaml")
    } else {
        path.to_path_buf()
    };
    let meta = parse_metadata(&std::fs::read_to_string(&meta_path)?)?;
    let image_path = meta_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&meta.image);
    let (w, h, classes) = decode_pgm(&std::fs::read(image_path)?)?;
    Ok(OccupancyGrid::from_cells(
        meta.resolution,
        w,
        h,
        meta.origin,
        classes.into_iter().map(CellClass::logodds).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, L_CLAMP};
    use proptest::prelude::*;

    const FIXTURE_PGM: &[u8] = include_bytes!("../../tests/fixtures/two_by_two.pgm");
    const FIXTURE_YAML: &str = include_str!("../../tests/fixtures/two_by_two.yaml");

    fn two_by_two() -> OccupancyGrid {
        // Bottom row: unknown, free. Top row: occupied, free.
        OccupancyGrid::from_cells(0.05, 2, 2, Point2::new(0.0, 0.0), vec![0.0, -L_CLAMP, L_CLAMP, -L_CLAMP])
    }

    #[test]
    fn fixture_matches_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let files = save_map(&two_by_two(), dir.path().join("two_by_two")).unwrap();
        assert_eq!(std::fs::read(&files.image).unwrap(), FIXTURE_PGM);
        assert_eq!(std::fs::read_to_string(&files.metadata).unwrap(), FIXTURE_YAML);
        assert_eq!(&FIXTURE_PGM[FIXTURE_PGM.len() - 4..], &[0, 254, 205, 254]);
    }

    #[test]
    fn load_fixture() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("two_by_two.pgm"), FIXTURE_PGM).unwrap();
        std::fs::write(dir.path().join("two_by_two.yaml"), FIXTURE_YAML).unwrap();
        let g = load_map(dir.path().join("two_by_two.yaml")).unwrap();
        assert_eq!(g, two_by_two());
        assert_eq!(g.class(Cell::new(0, 1)), CellClass::Occupied);
        let via_image = load_map(dir.path().join("two_by_two.pgm")).unwrap();
        assert_eq!(via_image, g);
    }

    #[test]
    fn truncated_raster_is_malformed() {
        let short = &FIXTURE_PGM[..FIXTURE_PGM.len() - 1];
        assert!(matches!(decode_pgm(short), Err(GridError::Malformed(_))));
        assert!(matches!(decode_pgm(b"P5\n2 2"), Err(GridError::Malformed(_))));
        assert!(matches!(decode_pgm(b"P2\n2 2\n255\n"), Err(GridError::Malformed(_))));
    }

    #[test]
    fn extra_bytes_and_stray_pixels_rejected() {
        let mut long = FIXTURE_PGM.to_vec();
        long.push(254);
        assert!(matches!(
            decode_pgm(&long),
            Err(GridError::DimensionMismatch { expected: 4, found: 5 })
        ));
        let mut stray = FIXTURE_PGM.to_vec();
        let n = stray.len();
        stray[n - 2] = 128;
        assert!(matches!(
            decode_pgm(&stray),
            Err(GridError::UnknownPixel { value: 128, .. })
        ));
    }

    #[test]
    fn header_comments_are_skipped() {
        let (w, h, c) = decode_pgm(b"P5\n# made by hand\n1 1\n255\n\xfe").unwrap();
        assert_eq!((w, h, c), (1, 1, vec![CellClass::Free]));
    }

    #[test]
    fn rotated_origin_rejected() {
        let text = FIXTURE_YAML.replace("origin: [0, 0, 0]", "origin: [0, 0, 0.5]");
        assert!(parse_metadata(&text).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_preserves_geometry_and_classes(
            w in 1usize..30, h in 1usize..30,
            ox in -20.0..20.0f64, oy in -20.0..20.0f64, res in 0.01..0.5f64,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cells = (0..w * h).map(|_| rng.random_range(-9.0..9.0)).collect();
            let g = OccupancyGrid::from_cells(res, w, h, Point2::new(ox, oy), cells);
            let dir = tempfile::tempdir().unwrap();
            save_map(&g, dir.path().join("m")).unwrap();
            let back = load_map(dir.path().join("m.yaml")).unwrap();
            prop_assert!(back.same_geometry(&g));
            prop_assert!(back.classes().eq(g.classes()));
        }
    }
}
