//! Kernel inspection artifacts: grayscale graymaps of |kernel| and a CSV of
//! the point parameters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Result, SmpError};
use crate::filter::SmpFilter;
use crate::grid::GridSpec;
use crate::kernel::rasterize;

/// Binary 8-bit PGM. `plane` is row-major, already in [0, 1].
fn write_pgm(path: &Path, height: usize, width: usize, plane: &[f64]) -> Result<()> {
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(plane.iter().map(|&v| (v * 255.0).round() as u8));
    let mut file = fs::File::create(path).map_err(|e| SmpError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| SmpError::io(path, e))
}

/// Rasterize a 2D filter, take absolute values, normalize each channel by
/// its own maximum (an all-zero channel stays all zero), and write one PGM
/// per channel next to a CSV of positions and radii at full precision.
///
/// With a single channel the image lands exactly at `path`; with several,
/// at `<stem>_c<channel>.pgm`. Returns every written path, image(s) first.
pub fn export_kernel_image(
    filter: &SmpFilter,
    grid: &GridSpec,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    if filter.dim() != 2 || grid.dim() != 2 {
        return Err(SmpError::ShapeMismatch(
            "kernel images are 2D; filter and grid must both be 2-dimensional".into(),
        ));
    }
    let kernel = rasterize(filter, grid)?;
    let (height, width) = (grid.extent()[0], grid.extent()[1]);
    let mut written = Vec::new();
    for c in 0..filter.channels() {
        let slab = kernel.slice(0, c);
        let max = slab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let plane: Vec<f64> = if max == 0.0 {
            vec![0.0; slab.len()]
        } else {
            slab.iter().map(|v| v.abs() / max).collect()
        };
        let img_path = if filter.channels() == 1 {
            path.to_path_buf()
        } else {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("kernel");
            path.with_file_name(format!("{stem}_c{c}.pgm"))
        };
        write_pgm(&img_path, height, width, &plane)?;
        written.push(img_path);
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("kernel");
    let csv_path = path.with_file_name(format!("{stem}_points.csv"));
    let mut csv = String::from("index,x0,x1,radius\n");
    for i in 0..filter.n_points() {
        let p = filter.position(i);
        csv.push_str(&format!("{i},{},{},{}\n", p[0], p[1], filter.radius(i)));
    }
    fs::write(&csv_path, csv).map_err(|e| SmpError::io(&csv_path, e))?;
    written.push(csv_path);
    Ok(written)
}
