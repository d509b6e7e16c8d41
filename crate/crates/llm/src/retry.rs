use std::sync::Arc;
use std::time::Duration;

use crate::transport::{ChatRequest, ChatTransport, TransportError};

/// Waits between attempts. Tests swap in a recorder instead of sleeping.
pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

#[derive(Clone)]
pub struct RetryPolicy {
    /// One delay per retry; the number of attempts is one more than this.
    pub delays: Vec<Duration>,
    pub sleeper: Sleeper,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: [1, 4, 16].into_iter().map(Duration::from_secs).collect(),
            sleeper: Arc::new(std::thread::sleep),
        }
    }
}

impl std::fmt::Debug for RetryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetryPolicy").field("delays", &self.delays).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallFailure {
    Transport { attempts: usize, error: TransportError },
    Parse { attempts: usize, message: String },
}

impl RetryPolicy {
    pub fn max_attempts(&self) -> usize {
        self.delays.len() + 1
    }

    /// Sends `request` until `parse` accepts the reply, retrying transport
    /// errors and parse failures alike.
    pub fn call<T>(
        &self,
        transport: &dyn ChatTransport,
        request: &ChatRequest,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, CallFailure> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let failure = match transport.send(request) {
                Ok(text) => match parse(&text) {
                    Ok(value) => return Ok(value),
                    Err(message) => CallFailure::Parse { attempts: attempt, message },
                },
                Err(error) => {
                    let fatal = !error.is_retryable();
                    let failure = CallFailure::Transport { attempts: attempt, error };
                    if fatal {
                        return Err(failure);
                    }
                    failure
                }
            };
            match self.delays.get(attempt - 1) {
                Some(delay) => {
                    log::warn!("oracle call attempt {attempt} failed ({failure:?}), retrying in {delay:?}");
                    (self.sleeper)(*delay);
                }
                None => return Err(failure),
            }
        }
    }
}
