//! Model directory layout: `model.toml` holds the spec, `vocab.txt` one token
//! per line, and every parameter lives in `<name>.ctxt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Model, ModelSpec, Vocab, WeightSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SPEC_FILE: &str = "model.toml";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TENSOR_EXT: &str = "ctxt";

pub(crate) fn save_model(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = toml::to_string(&model.spec)
        .map_err(|e| Error::format(dir.join(SPEC_FILE), e.to_string()))?;
    let p = dir.join(SPEC_FILE);
    fs::write(&p, spec).map_err(|e| Error::io(&p, e))?;
    let mut vocab = model.vocab.tokens().join("\n");
    vocab.push('\n');
    let p = dir.join(VOCAB_FILE);
    fs::write(&p, vocab).map_err(|e| Error::io(&p, e))?;
    for (name, t) in model.weights.named() {
        t.save(&dir.join(format!("{name}.{TENSOR_EXT}")))?;
    }
    Ok(())
}

pub(crate) fn load_model(dir: &Path) -> Result<Model> {
    let p = dir.join(SPEC_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let spec: ModelSpec = toml::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))?;
    spec.validate()?;

    let p = dir.join(VOCAB_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let tokens: Vec<String> = text.lines().map(str::to_string).collect();

    let mut named = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(TENSOR_EXT) {
            continue;
        }
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::format(&path, "parameter file name is not UTF-8"))?
            .to_string();
        named.insert(name, Tensor::load(&path)?);
    }
    let weights = WeightSet::from_named(&spec, named)?;
    Model::new(spec, weights, Vocab::new(tokens))
}
