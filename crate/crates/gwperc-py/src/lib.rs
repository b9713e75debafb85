use pyo3::prelude::*;

#[pymodule]
fn gwperc_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
