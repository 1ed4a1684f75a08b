use pyo3::prelude::*;

#[pymodule]
fn duohash_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
