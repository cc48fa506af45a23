//! Template library text format.
//!
//! ```text
//! ARTPL 1
//! marker <id> <G>
//! <G lines of G characters from {0,1}>
//! marker <id> <G>
//! ...
//! ```
//!
//! Loading validates the whole library: unique ids, one shared grid size, an
//! all-zero border ring per marker, and rotation-distinctness (no two stored
//! grids coincide under any quarter-turn, markers included against their own
//! rotations). A valid library therefore never produces ambiguous matches.

use super::FormatError;
use crate::registration::{rotate_ccw, MarkerTemplate};

pub fn parse_template_library(text: &str) -> Result<Vec<MarkerTemplate>, FormatError> {
    let mut lines = text.lines().enumerate();
    let (_, magic) = lines.next().ok_or(FormatError::BadMagic {
        byte: 1,
        expected: "ARTPL 1",
    })?;
    if magic.trim_end() != "ARTPL 1" {
        return Err(FormatError::BadMagic {
            byte: 1,
            expected: "ARTPL 1",
        });
    }

    let mut templates: Vec<(usize, MarkerTemplate)> = Vec::new();
    let mut grid_size: Option<usize> = None;
    while let Some((idx, line)) = lines.next() {
        let line_no = idx + 1;
        let line = line.trim_end();
        if line.is_empty() {
            return Err(FormatError::TemplateSyntax {
                line: line_no,
                message: "blank line".into(),
            });
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("marker") {
            return Err(FormatError::TemplateSyntax {
                line: line_no,
                message: format!("expected 'marker <id> <G>', found '{line}'"),
            });
        }
        let id: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
            FormatError::TemplateSyntax {
                line: line_no,
                message: "missing or invalid marker id".into(),
            }
        })?;
        let g: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
            FormatError::TemplateSyntax {
                line: line_no,
                message: "missing or invalid grid size".into(),
            }
        })?;
        if parts.next().is_some() {
            return Err(FormatError::TemplateSyntax {
                line: line_no,
                message: "trailing tokens after grid size".into(),
            });
        }
        if g < 4 {
            return Err(FormatError::TemplateSyntax {
                line: line_no,
                message: format!("grid size {g} below the minimum of 4"),
            });
        }
        match grid_size {
            None => grid_size = Some(g),
            Some(expected) if expected != g => {
                return Err(FormatError::MixedGridSize {
                    line: line_no,
                    expected,
                    found: g,
                });
            }
            _ => {}
        }
        if templates.iter().any(|(_, t)| t.id == id) {
            return Err(FormatError::DuplicateId { line: line_no, id });
        }

        let mut cells = Vec::with_capacity(g * g);
        let header_line = line_no;
        for row in 0..g {
            let (ridx, raw) = lines.next().ok_or_else(|| FormatError::TemplateSyntax {
                line: header_line + row,
                message: format!("marker {id}: expected {g} grid rows, file ended"),
            })?;
            let row_no = ridx + 1;
            let raw = raw.trim_end();
            if raw.len() != g || raw.bytes().any(|b| b != b'0' && b != b'1') {
                return Err(FormatError::TemplateSyntax {
                    line: row_no,
                    message: format!("expected {g} characters of 0/1, found '{raw}'"),
                });
            }
            for (col, b) in raw.bytes().enumerate() {
                let bit = b - b'0';
                let border = row == 0 || row == g - 1 || col == 0 || col == g - 1;
                if border && bit != 0 {
                    return Err(FormatError::BorderViolation {
                        line: row_no,
                        id,
                        row,
                        col,
                    });
                }
                cells.push(bit);
            }
        }
        templates.push((header_line, MarkerTemplate { id, grid: g, cells }));
    }

    let templates: Vec<MarkerTemplate> = templates.into_iter().map(|(_, t)| t).collect();
    validate_library(&templates, 0)?;
    Ok(templates)
}

/// Check rotation-distinctness: every pair of (template, rotation) grids that
/// is not the identical pair must differ by a Hamming distance greater than
/// `2 * tau`. Self-pairs cover rotational symmetry of a single marker.
pub fn validate_library(templates: &[MarkerTemplate], tau: u32) -> Result<(), FormatError> {
    let threshold = 2 * tau;
    for (i, a) in templates.iter().enumerate() {
        for b in templates.iter().skip(i) {
            let same = a.id == b.id;
            let mut rotated = b.cells.clone();
            for rotation in 0..4u8 {
                if rotation > 0 {
                    rotated = rotate_ccw(&rotated, b.grid);
                }
                if same && rotation == 0 {
                    continue;
                }
                let hamming: u32 = a
                    .cells
                    .iter()
                    .zip(&rotated)
                    .map(|(x, y)| u32::from(x != y))
                    .sum();
                if hamming <= threshold {
                    return Err(FormatError::RotationCollision {
                        id_a: a.id,
                        id_b: b.id,
                        rotation,
                        hamming,
                        threshold,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Serialize a library in the `ARTPL 1` text format.
pub fn write_template_library(templates: &[MarkerTemplate]) -> String {
    let mut out = String::from("ARTPL 1\n");
    for t in templates {
        out.push_str(&format!("marker {} {}\n", t.id, t.grid));
        for row in 0..t.grid {
            for col in 0..t.grid {
                out.push(if t.cell(row, col) == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
    }
    out
}

/// Deterministic ready-made library: eight 8x8 markers whose payloads are
/// drawn from a fixed seed with rejection until every pair of rotated grids
/// is at least 10 bits apart.
pub fn demo_library() -> Vec<MarkerTemplate> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x51_AD_4A_2C);
    let g = 8usize;
    let mut templates: Vec<MarkerTemplate> = Vec::new();
    let mut next_id = 0u32;
    while templates.len() < 8 {
        let mut cells = vec![0u8; g * g];
        for row in 1..g - 1 {
            for col in 1..g - 1 {
                cells[row * g + col] = u8::from(rng.random::<f64>() < 0.5);
            }
        }
        let candidate = MarkerTemplate {
            id: next_id,
            grid: g,
            cells,
        };
        let mut trial = templates.clone();
        trial.push(candidate.clone());
        if validate_library(&trial, 4).is_ok() {
            templates.push(candidate);
            next_id += 1;
        }
    }
    templates
}
