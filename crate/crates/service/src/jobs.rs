//! Long-running compute requests run as jobs that can be polled or cancelled.
//!
//! Cancelling a job stops it being reported; a computation already running
//! on a worker thread finishes and its result is dropped.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use elicit_core::ApiError;
use serde::Serialize;
use serde_json::value::RawValue;
use tokio::task::AbortHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub id: String,
    pub operation: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Box<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

struct Job {
    view: JobView,
    abort: Option<AbortHandle>,
}

#[derive(Default, Clone)]
pub struct Jobs {
    inner: Arc<Mutex<HashMap<String, Job>>>,
}

impl Jobs {
    /// Run `work` on the blocking pool and return the job id.
    pub fn spawn<F>(&self, operation: &str, work: F) -> String
    where
        F: FnOnce() -> Result<Box<RawValue>, ApiError> + Send + 'static,
    {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let view = JobView {
            id: id.clone(),
            operation: operation.to_string(),
            status: JobStatus::Running,
            result: None,
            error: None,
        };
        let mut map = self.inner.lock().expect("job table");
        map.insert(id.clone(), Job { view, abort: None });
        let jobs = self.clone();
        let job_id = id.clone();
        let handle = tokio::spawn(async move {
            let outcome = tokio::task::spawn_blocking(work).await;
            let mut map = jobs.inner.lock().expect("job table");
            if let Some(job) = map.get_mut(&job_id) {
                if job.view.status != JobStatus::Running {
                    return;
                }
                match outcome {
                    Ok(Ok(v)) => {
                        job.view.status = JobStatus::Done;
                        job.view.result = Some(v);
                    }
                    Ok(Err(e)) => {
                        job.view.status = JobStatus::Failed;
                        job.view.error = Some(e);
                    }
                    Err(e) => {
                        job.view.status = JobStatus::Failed;
                        job.view.error =
                            Some(ApiError { code: "InternalError".into(), message: e.to_string(), detail: None });
                    }
                }
                job.abort = None;
            }
        });
        map.get_mut(&id).expect("inserted").abort = Some(handle.abort_handle());
        id
    }

    pub fn get(&self, id: &str) -> Option<JobView> {
        self.inner.lock().expect("job table").get(id).map(|j| j.view.clone())
    }

    pub fn cancel(&self, id: &str) -> Option<JobView> {
        let mut map = self.inner.lock().expect("job table");
        let job = map.get_mut(id)?;
        if job.view.status == JobStatus::Running {
            job.view.status = JobStatus::Cancelled;
            if let Some(a) = job.abort.take() {
                a.abort();
            }
        }
        Some(job.view.clone())
    }
}
