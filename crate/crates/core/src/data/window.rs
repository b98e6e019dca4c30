use super::{DataError, Sample, SeriesTable};
use crate::numerics::Tensor;

/// Cuts `width`-row windows every `stride` rows; each becomes a `[1, p, width]`
/// sample with features along the height axis. A trailing partial window is dropped.
pub fn window(table: &SeriesTable, width: usize, stride: usize, label: usize) -> Result<Vec<Sample>, DataError> {
    if width == 0 || stride == 0 {
        return Err(DataError::Window(format!(
            "width ({width}) and stride ({stride}) must be positive"
        )));
    }
    if width > table.n_rows() {
        return Err(DataError::Window(format!(
            "window width {width} exceeds {} available rows",
            table.n_rows()
        )));
    }
    let p = table.n_cols();
    let count = (table.n_rows() - width) / stride + 1;
    let samples = (0..count)
        .map(|w| {
            let start = w * stride;
            let mut data = vec![0.0; p * width];
            for t in 0..width {
                for (f, &v) in table.row(start + t).iter().enumerate() {
                    data[f * width + t] = v;
                }
            }
            Sample {
                x: Tensor::new(vec![1, p, width], data).expect("window shape is positive"),
                label,
            }
        })
        .collect();
    Ok(samples)
}
