//! Execution strategy for independent work units. Results are always
//! returned in index order, so any executor yields identical output.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub trait Executor: Sync {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs work units one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..len).map(f).collect()
    }
}

/// Maps fallible work units; the lowest failing index is reported.
pub fn try_map<X, T, F>(exec: &X, len: usize, f: F) -> Result<Vec<T>>
where
    X: Executor,
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let mut out = Vec::with_capacity(len);
    for (index, r) in exec.map(len, f).into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => return Err(Error::Replicate { index, source: Box::new(e) }),
        }
    }
    Ok(out)
}
