//! Audit trail of scored events. Records go through a bounded queue to a
//! single writer thread; when the queue is full the record is dropped and
//! counted instead of blocking the caller.

use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::JoinHandle;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::error::{Error, Result};
use crate::features::FeatureBundle;
use crate::model::{event_from_value, ScoreResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub item_id: String,
    pub timestamp: DateTime<Utc>,
    /// The scored event in wire format.
    pub event: serde_json::Value,
    pub features: Option<FeatureBundle>,
    pub result: ScoreResult,
    pub bundle_version: String,
    pub latency_micros: u64,
}

impl AuditRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit serialization is infallible")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse(format!("malformed audit record: {e}")))
    }

    /// Rescores the recorded event and reports whether the result matches.
    pub fn replay(&self, bundle: &ModelBundle) -> Result<bool> {
        let event = event_from_value(self.event.clone())?;
        Ok(bundle.score(&event)? == self.result)
    }
}

/// Destination for audit records; a database client can implement this.
pub trait AuditSink: Send {
    fn write(&mut self, record: &AuditRecord) -> io::Result<()>;
    fn flush(&mut self) -> io::Result<()>;
}

/// JSON lines over any writer.
pub struct JsonLinesSink<W: Write + Send> {
    out: W,
}

impl<W: Write + Send> JsonLinesSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write + Send> AuditSink for JsonLinesSink<W> {
    fn write(&mut self, record: &AuditRecord) -> io::Result<()> {
        self.out.write_all(record.to_line().as_bytes())?;
        self.out.write_all(b"\n")
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

#[derive(Debug, Default)]
struct Counters {
    written: AtomicU64,
    dropped: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditStats {
    pub written: u64,
    pub dropped: u64,
}

pub struct AuditLogger {
    tx: Option<SyncSender<AuditRecord>>,
    counters: Arc<Counters>,
    worker: Option<JoinHandle<()>>,
}

fn drain(rx: Receiver<AuditRecord>, mut sink: Box<dyn AuditSink>, counters: Arc<Counters>) {
    let write = |sink: &mut Box<dyn AuditSink>, rec: AuditRecord| {
        if sink.write(&rec).is_ok() {
            counters.written.fetch_add(1, Ordering::Relaxed);
        } else {
            counters.dropped.fetch_add(1, Ordering::Relaxed);
        }
    };
    while let Ok(rec) = rx.recv() {
        write(&mut sink, rec);
        while let Ok(rec) = rx.try_recv() {
            write(&mut sink, rec);
        }
        let _ = sink.flush();
    }
    let _ = sink.flush();
}

impl AuditLogger {
    pub fn spawn(sink: Box<dyn AuditSink>, capacity: usize) -> Self {
        let (tx, rx) = sync_channel(capacity.max(1));
        let counters = Arc::new(Counters::default());
        let c = Arc::clone(&counters);
        let worker = std::thread::Builder::new()
            .name("audit-writer".into())
            .spawn(move || drain(rx, sink, c))
            .expect("spawning the audit writer");
        Self { tx: Some(tx), counters, worker: Some(worker) }
    }

    /// Enqueues without blocking; a full queue drops the record.
    pub fn record(&self, rec: AuditRecord) {
        let Some(tx) = &self.tx else { return };
        match tx.try_send(rec) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                self.counters.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
    }

    /// Enqueues, waiting for space. For batch jobs where every record must
    /// be kept.
    pub fn record_blocking(&self, rec: AuditRecord) {
        let Some(tx) = &self.tx else { return };
        if tx.send(rec).is_err() {
            self.counters.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn stats(&self) -> AuditStats {
        AuditStats {
            written: self.counters.written.load(Ordering::Relaxed),
            dropped: self.counters.dropped.load(Ordering::Relaxed),
        }
    }

    /// Flushes outstanding records and stops the writer.
    pub fn close(mut self) -> AuditStats {
        self.shutdown();
        self.stats()
    }

    fn shutdown(&mut self) {
        self.tx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for AuditLogger {
    fn drop(&mut self) {
        self.shutdown();
    }
}
