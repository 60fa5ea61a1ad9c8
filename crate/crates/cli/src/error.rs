use rislab_core::Error as CoreError;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ASSUMPTION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigErrorKind {
    Io,
    Malformed,
    Dimension,
    NonHermitian,
    Invalid,
}

impl ConfigErrorKind {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigErrorKind::Io => "E_CONFIG_IO",
            ConfigErrorKind::Malformed => "E_CONFIG_SYNTAX",
            ConfigErrorKind::Dimension => "E_CONFIG_DIMENSION",
            ConfigErrorKind::NonHermitian => "E_CONFIG_NON_HERMITIAN",
            ConfigErrorKind::Invalid => "E_CONFIG_INVALID",
        }
    }

    pub fn from_core(e: &CoreError) -> Self {
        match e {
            CoreError::Dimension(_) => ConfigErrorKind::Dimension,
            CoreError::NotHermitian { .. } => ConfigErrorKind::NonHermitian,
            _ => ConfigErrorKind::Invalid,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub kind: ConfigErrorKind,
    /// Dotted field path, empty for document-level errors.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}: {}", self.kind.code(), self.message)
        } else {
            write!(f, "{}: {}: {}", self.kind.code(), self.path, self.message)
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Usage(String),
    Core(CoreError),
    Io(String),
    Assumption(String),
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_assumption() => EXIT_ASSUMPTION,
            CliError::Assumption(_) => EXIT_ASSUMPTION,
            CliError::Core(_) | CliError::Io(_) => EXIT_NUMERICAL,
            CliError::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) if e.is_assumption() => write!(f, "assumption not met: {e}"),
            CliError::Core(e) => write!(f, "numerical error: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Assumption(m) => write!(f, "assumption not met: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}
