//! Per-class morphological hole filling and class-map rendering.

use std::io::{BufRead, Write};

use crate::error::{HsiError, Result};

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(HsiError::DimensionMismatch(format!(
                "{rows}x{cols} mask with {} pixels",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Fills every 4-connected background component that does not touch the
/// image border. Foreground is never cleared.
pub fn fill_holes(mask: &Mask) -> Mask {
    let (rows, cols) = (mask.rows, mask.cols);
    let mut out = mask.data.clone();
    let mut seen = vec![false; rows * cols];
    let mut component = Vec::new();
    let mut stack = Vec::new();
    for start in 0..rows * cols {
        if mask.data[start] || seen[start] {
            continue;
        }
        component.clear();
        let mut touches_border = false;
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            component.push(p);
            let (r, c) = (p / cols, p % cols);
            if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                touches_border = true;
            }
            let neighbours = [
                (r > 0).then(|| p - cols),
                (r + 1 < rows).then(|| p + cols),
                (c > 0).then(|| p - 1),
                (c + 1 < cols).then(|| p + 1),
            ];
            for q in neighbours.into_iter().flatten() {
                if !mask.data[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        if !touches_border {
            for &p in &component {
                out[p] = true;
            }
        }
    }
    Mask {
        rows,
        cols,
        data: out,
    }
}

/// Fully classified image; every entry is a class in `1..=n_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u16>,
    pub n_classes: usize,
}

impl ClassMap {
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>, n_classes: usize) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(HsiError::DimensionMismatch(format!(
                "{rows}x{cols} class map with {} entries",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l as usize > n_classes) {
            return Err(HsiError::LabelOutOfRange {
                label: bad,
                n_classes,
            });
        }
        Ok(Self {
            rows,
            cols,
            labels,
            n_classes,
        })
    }

    pub fn mask_of(&self, class: u16) -> Mask {
        Mask {
            rows: self.rows,
            cols: self.cols,
            data: self.labels.iter().map(|&l| l == class).collect(),
        }
    }
}

/// Single ascending pass over the classes: fill the holes of the current
/// class mask and give every newly filled pixel that class. Returns the
/// cleaned map and the number of pixels reassigned to each class (index 0
/// is class 1).
pub fn clean_map(map: &ClassMap) -> (ClassMap, Vec<usize>) {
    let mut out = map.clone();
    let mut reassigned = vec![0usize; map.n_classes];
    for class in 1..=map.n_classes as u16 {
        let mask = out.mask_of(class);
        let filled = fill_holes(&mask);
        for (p, (&before, &after)) in mask.data.iter().zip(&filled.data).enumerate() {
            if after && !before {
                out.labels[p] = class;
                reassigned[class as usize - 1] += 1;
            }
        }
    }
    (out, reassigned)
}

/// Fixed class palette; class `c` uses entry `c`, cycling past the end.
/// Entry 0 (black) is reserved for unlabeled ground truth.
pub const PALETTE: [[u8; 3]; 17] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

pub fn palette_color(class: u16) -> [u8; 3] {
    if class == 0 {
        PALETTE[0]
    } else {
        PALETTE[1 + (class as usize - 1) % (PALETTE.len() - 1)]
    }
}

/// Binary PGM (`P5`, maxval 255) whose gray level is the class id.
pub fn write_pgm<W: Write>(mut w: W, rows: usize, cols: usize, labels: &[u16]) -> Result<()> {
    if labels.len() != rows * cols {
        return Err(HsiError::DimensionMismatch("label count vs image size".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 255) {
        return Err(HsiError::LabelOutOfRange {
            label: bad,
            n_classes: 255,
        });
    }
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Binary PPM (`P6`) rendered through [`PALETTE`].
pub fn write_ppm<W: Write>(mut w: W, rows: usize, cols: usize, labels: &[u16]) -> Result<()> {
    if labels.len() != rows * cols {
        return Err(HsiError::DimensionMismatch("label count vs image size".into()));
    }
    write!(w, "P6\n{cols} {rows}\n255\n")?;
    let mut bytes = Vec::with_capacity(labels.len() * 3);
    for &l in labels {
        bytes.extend_from_slice(&palette_color(l));
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn pgm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let ch = byte[0] as char;
        if ch == '#' && token.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if ch.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(ch);
    }
    Ok(token)
}

/// Reads a PGM written by [`write_pgm`]; returns `(rows, cols, labels)`.
pub fn read_pgm<R: BufRead>(mut r: R) -> Result<(usize, usize, Vec<u16>)> {
    let bad = |reason: String| HsiError::Format { what: "PGM", reason };
    if pgm_token(&mut r)? != "P5" {
        return Err(bad("expected P5 magic".into()));
    }
    let mut num = |name: &str| -> Result<usize> {
        let t = pgm_token(&mut r)?;
        t.parse().map_err(|_| bad(format!("bad {name} `{t}`")))
    };
    let cols = num("width")?;
    let rows = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    let mut bytes = vec![0u8; rows * cols];
    r.read_exact(&mut bytes)
        .map_err(|e| bad(format!("pixel data: {e}")))?;
    Ok((rows, cols, bytes.into_iter().map(u16::from).collect()))
}
