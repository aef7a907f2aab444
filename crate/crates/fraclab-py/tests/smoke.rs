use std::ffi::CString;

use pyo3::prelude::*;
use pyfraclab::pyfraclab;

/// Runs python/smoke_test.py against the module linked into this binary.
#[test]
fn python_smoke_test() {
    pyo3::append_to_inittab!(pyfraclab);
    Python::initialize();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../python/smoke_test.py");
    let code = CString::new(std::fs::read_to_string(path).unwrap()).unwrap();
    Python::attach(|py| {
        let module = PyModule::from_code(py, &code, c"smoke_test.py", c"smoke_test").unwrap();
        if let Err(e) = module.getattr("main").and_then(|f| f.call0()) {
            e.display(py);
            panic!("smoke test failed");
        }
    });
}
