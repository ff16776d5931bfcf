//! In-process, topic-based message bus.
//!
//! Every topic keeps an independent `enqueue_seq` counter per ordering key.
//! Consumers join a *group*; within a group each message goes to exactly one
//! consumer, and all messages of one key stick to the consumer that first
//! received that key, so per-key order holds even with several consumers.
//!
//! Delivery is at-least-once: a message stays in flight until it is acked.
//! Dropping a [`Subscription`] (or calling [`Subscription::crash`]) puts the
//! unacked messages back at the head of the group queue, flagged as
//! redelivered. Consumers deduplicate by `(topic, key, enqueue_seq)`, see
//! [`Dedup`].
//!
//! Publishing blocks while any group of the topic already holds `capacity`
//! undelivered messages. Nothing is ever dropped.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("bus is shut down")]
    Shutdown,
    #[error("topic {0:?} is full")]
    Full(String),
    #[error("invalid topic name {0:?}")]
    InvalidTopic(String),
    #[error("timed out")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusMessage {
    pub topic: String,
    pub key: String,
    pub payload: Vec<u8>,
    pub enqueue_seq: u64,
}

/// A message handed to a consumer. Must be passed back to
/// [`Subscription::ack`] once processed.
#[derive(Debug, Clone)]
pub struct Delivery {
    pub message: Arc<BusMessage>,
    pub redelivered: bool,
    tag: u64,
}

#[derive(Debug, Clone)]
struct Envelope {
    message: Arc<BusMessage>,
    // topic-wide publish order; used to restore order on requeue
    tag: u64,
    redelivered: bool,
}

#[derive(Debug, Default)]
struct Group {
    pending: VecDeque<Envelope>,
    inflight: HashMap<u64, Vec<Envelope>>,
    owners: HashMap<String, u64>,
}

#[derive(Debug, Default)]
struct Topic {
    seqs: HashMap<String, u64>,
    next_tag: u64,
    groups: BTreeMap<String, Group>,
    // messages published before any group subscribed
    unclaimed: VecDeque<Envelope>,
}

#[derive(Debug, Default)]
struct State {
    shutdown: bool,
    next_consumer: u64,
    topics: HashMap<String, Topic>,
}

#[derive(Debug)]
struct Shared {
    state: Mutex<State>,
    cond: Condvar,
    capacity: usize,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone)]
pub struct Bus {
    shared: Arc<Shared>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

fn check_topic(topic: &str) -> Result<(), BusError> {
    if topic.is_empty() || !topic.is_ascii() {
        return Err(BusError::InvalidTopic(topic.to_string()));
    }
    Ok(())
}

impl Bus {
    pub fn new(capacity: usize) -> Self {
        Self {
            shared: Arc::new(Shared {
                state: Mutex::new(State::default()),
                cond: Condvar::new(),
                capacity: capacity.max(1),
            }),
        }
    }

    pub fn capacity(&self) -> usize {
        self.shared.capacity
    }

    /// Publishes a message, blocking while the topic is at capacity.
    pub fn publish(&self, topic: &str, key: &str, payload: Vec<u8>) -> Result<u64, BusError> {
        self.publish_inner(topic, key, payload, None)
    }

    /// Like [`Bus::publish`] but fails with [`BusError::Full`] instead of blocking.
    pub fn try_publish(&self, topic: &str, key: &str, payload: Vec<u8>) -> Result<u64, BusError> {
        self.publish_inner(topic, key, payload, Some(Duration::ZERO))
    }

    pub fn publish_timeout(
        &self,
        topic: &str,
        key: &str,
        payload: Vec<u8>,
        timeout: Duration,
    ) -> Result<u64, BusError> {
        self.publish_inner(topic, key, payload, Some(timeout))
    }

    fn publish_inner(
        &self,
        topic: &str,
        key: &str,
        payload: Vec<u8>,
        timeout: Option<Duration>,
    ) -> Result<u64, BusError> {
        check_topic(topic)?;
        let deadline = timeout.map(|t| Instant::now() + t);
        let cap = self.shared.capacity;
        let mut state = self.shared.lock();
        loop {
            if state.shutdown {
                return Err(BusError::Shutdown);
            }
            let full = state.topics.get(topic).is_some_and(|t| {
                t.groups.values().any(|g| g.pending.len() >= cap) || t.unclaimed.len() >= cap
            });
            if !full {
                break;
            }
            match deadline {
                None => {
                    state = self
                        .shared
                        .cond
                        .wait(state)
                        .unwrap_or_else(|e| e.into_inner())
                }
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(BusError::Full(topic.to_string()));
                    }
                    state = self
                        .shared
                        .cond
                        .wait_timeout(state, d - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0;
                }
            }
        }
        let t = state.topics.entry(topic.to_string()).or_default();
        let seq = t.seqs.entry(key.to_string()).or_insert(0);
        *seq += 1;
        let enqueue_seq = *seq;
        let tag = t.next_tag;
        t.next_tag += 1;
        let env = Envelope {
            message: Arc::new(BusMessage {
                topic: topic.to_string(),
                key: key.to_string(),
                payload,
                enqueue_seq,
            }),
            tag,
            redelivered: false,
        };
        if t.groups.is_empty() {
            t.unclaimed.push_back(env);
        } else {
            for g in t.groups.values_mut() {
                g.pending.push_back(env.clone());
            }
        }
        drop(state);
        self.shared.cond.notify_all();
        Ok(enqueue_seq)
    }

    /// Joins consumer group `group` on `topic`.
    pub fn subscribe(&self, topic: &str, group: &str) -> Result<Subscription, BusError> {
        check_topic(topic)?;
        let mut state = self.shared.lock();
        if state.shutdown {
            return Err(BusError::Shutdown);
        }
        state.next_consumer += 1;
        let consumer = state.next_consumer;
        let t = state.topics.entry(topic.to_string()).or_default();
        let first_group = t.groups.is_empty();
        let g = t.groups.entry(group.to_string()).or_default();
        if first_group {
            g.pending.extend(t.unclaimed.drain(..));
        }
        g.inflight.insert(consumer, Vec::new());
        drop(state);
        self.shared.cond.notify_all();
        Ok(Subscription {
            shared: Arc::clone(&self.shared),
            topic: topic.to_string(),
            group: group.to_string(),
            consumer,
            closed: false,
        })
    }

    /// Rejects further publishes and wakes every blocked receiver.
    pub fn shutdown(&self) {
        self.shared.lock().shutdown = true;
        self.shared.cond.notify_all();
    }

    pub fn is_shutdown(&self) -> bool {
        self.shared.lock().shutdown
    }

    /// Undelivered plus unacked messages for `group` on `topic`.
    pub fn backlog(&self, topic: &str, group: &str) -> usize {
        let state = self.shared.lock();
        state
            .topics
            .get(topic)
            .and_then(|t| t.groups.get(group))
            .map(|g| g.pending.len() + g.inflight.values().map(Vec::len).sum::<usize>())
            .unwrap_or(0)
    }
}

/// One consumer's handle on a group.
#[derive(Debug)]
pub struct Subscription {
    shared: Arc<Shared>,
    topic: String,
    group: String,
    consumer: u64,
    closed: bool,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    fn take_next(&self, state: &mut State) -> Option<Delivery> {
        let g = state
            .topics
            .get_mut(&self.topic)?
            .groups
            .get_mut(&self.group)?;
        let idx = g.pending.iter().position(|e| {
            g.owners
                .get(&e.message.key)
                .is_none_or(|owner| *owner == self.consumer)
        })?;
        let env = g.pending.remove(idx)?;
        g.owners.insert(env.message.key.clone(), self.consumer);
        let delivery = Delivery {
            message: Arc::clone(&env.message),
            redelivered: env.redelivered,
            tag: env.tag,
        };
        g.inflight.entry(self.consumer).or_default().push(env);
        Some(delivery)
    }

    /// Non-blocking receive.
    pub fn try_recv(&self) -> Result<Option<Delivery>, BusError> {
        let mut state = self.shared.lock();
        let d = self.take_next(&mut state);
        if d.is_none() && state.shutdown {
            return Err(BusError::Shutdown);
        }
        if d.is_some() {
            drop(state);
            // capacity may have freed up
            self.shared.cond.notify_all();
        }
        Ok(d)
    }

    /// Blocks until a message is available or the bus shuts down.
    pub fn recv(&self) -> Result<Delivery, BusError> {
        self.recv_inner(None)
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Delivery, BusError> {
        self.recv_inner(Some(Instant::now() + timeout))
    }

    fn recv_inner(&self, deadline: Option<Instant>) -> Result<Delivery, BusError> {
        let mut state = self.shared.lock();
        loop {
            if let Some(d) = self.take_next(&mut state) {
                drop(state);
                self.shared.cond.notify_all();
                return Ok(d);
            }
            if state.shutdown {
                return Err(BusError::Shutdown);
            }
            state = match deadline {
                None => self
                    .shared
                    .cond
                    .wait(state)
                    .unwrap_or_else(|e| e.into_inner()),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(BusError::Timeout);
                    }
                    self.shared
                        .cond
                        .wait_timeout(state, d - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0
                }
            };
        }
    }

    pub fn ack(&self, delivery: &Delivery) {
        let mut state = self.shared.lock();
        if let Some(g) = state
            .topics
            .get_mut(&self.topic)
            .and_then(|t| t.groups.get_mut(&self.group))
        {
            if let Some(list) = g.inflight.get_mut(&self.consumer) {
                list.retain(|e| e.tag != delivery.tag);
            }
        }
        drop(state);
        self.shared.cond.notify_all();
    }

    /// Returns every unacked message to the group and releases key ownership,
    /// as if the consumer process died. The subscription stays usable.
    pub fn crash(&mut self) {
        self.requeue(false);
    }

    fn requeue(&mut self, leave: bool) {
        let mut state = self.shared.lock();
        if let Some(g) = state
            .topics
            .get_mut(&self.topic)
            .and_then(|t| t.groups.get_mut(&self.group))
        {
            let mut returned = if leave {
                g.inflight.remove(&self.consumer).unwrap_or_default()
            } else {
                g.inflight
                    .get_mut(&self.consumer)
                    .map(std::mem::take)
                    .unwrap_or_default()
            };
            returned.sort_by_key(|e| e.tag);
            for mut env in returned.into_iter().rev() {
                env.redelivered = true;
                g.pending.push_front(env);
            }
            g.owners.retain(|_, owner| *owner != self.consumer);
        }
        drop(state);
        self.shared.cond.notify_all();
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if !self.closed {
            self.closed = true;
            self.requeue(true);
        }
    }
}

/// Consumer-side idempotency filter keyed by `(topic, key) -> last enqueue_seq`.
#[derive(Debug, Default)]
pub struct Dedup {
    seen: HashMap<(String, String), u64>,
}

impl Dedup {
    /// Returns `true` the first time a message is seen, `false` for redeliveries
    /// of something already processed.
    pub fn first_time(&mut self, msg: &BusMessage) -> bool {
        let last = self
            .seen
            .entry((msg.topic.clone(), msg.key.clone()))
            .or_insert(0);
        if msg.enqueue_seq <= *last {
            false
        } else {
            *last = msg.enqueue_seq;
            true
        }
    }
}
