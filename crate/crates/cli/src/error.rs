use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {artifact}; run `gar {producer}` first")]
    Dependency { artifact: String, producer: &'static str },

    #[error(transparent)]
    Core(#[from] gar_core::Error),

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use gar_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Dependency { .. } => "dependency",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Length { .. } => "length",
                E::Input(_) => "input",
                E::Domain(_) => "domain",
                E::Alignment(_) => "alignment",
                E::Shape(_) => "shape",
                E::Parameter(_) => "parameter",
                E::Config(_) => "config",
                E::RankDeficient { .. } => "rank_deficient",
                E::Numerical(_) => "numerical",
                E::Schema { .. } => "schema",
                E::Io(_) => "io",
                E::Csv(_) => "csv",
                E::Json(_) => "json",
            },
        }
    }

    pub fn to_json(&self, command: &str) -> serde_json::Value {
        let mut err = json!({
            "kind": self.kind(),
            "command": command,
            "message": self.to_string(),
        });
        if let CliError::Dependency { artifact, producer } = self {
            err["artifact"] = json!(artifact);
            err["producer"] = json!(producer);
        }
        json!({ "error": err })
    }
}
