use saferoute::routing::RouteError;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NO_PATH: i32 = 3;
pub const EXIT_NEGATIVE_CYCLE: i32 = 4;
pub const EXIT_NOT_CONVERGED: i32 = 5;

/// A message for stderr and the process exit code that goes with it.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_DATA, message: message.into() }
    }
}

impl From<RouteError> for Failure {
    fn from(e: RouteError) -> Failure {
        let code = match e {
            RouteError::NegativeCycle => EXIT_NEGATIVE_CYCLE,
            RouteError::NotConverged { .. } => EXIT_NOT_CONVERGED,
            RouteError::Config(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure { code, message: e.to_string() }
    }
}
