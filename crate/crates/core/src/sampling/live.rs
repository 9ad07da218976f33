//! Live backend over the Linux `perf_event_open(2)` interface.
//!
//! Every hardware group is opened with `PERF_FORMAT_GROUP | PERF_FORMAT_ID`
//! so a leader overflow (or a final read) returns all member values at once.
//! Sampled sessions map a ring buffer on the leader and decode
//! `PERF_RECORD_SAMPLE` records carrying IP, TID, TIME, READ and CALLCHAIN.

use std::collections::{HashMap, VecDeque};
use std::ffi::CString;
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd, RawFd};
use std::sync::atomic::{fence, Ordering};

use indexmap::IndexMap;

use super::{GroupPlan, SampleRecord, SamplingError, SessionStats, Target};
use crate::platform::{EventDescriptor, EventKind};

const PERF_TYPE_HARDWARE: u32 = 0;
const PERF_TYPE_RAW: u32 = 4;

const PERF_SAMPLE_IP: u64 = 1 << 0;
const PERF_SAMPLE_TID: u64 = 1 << 1;
const PERF_SAMPLE_TIME: u64 = 1 << 2;
const PERF_SAMPLE_READ: u64 = 1 << 4;
const PERF_SAMPLE_CALLCHAIN: u64 = 1 << 5;

const PERF_FORMAT_TOTAL_TIME_ENABLED: u64 = 1 << 0;
const PERF_FORMAT_TOTAL_TIME_RUNNING: u64 = 1 << 1;
const PERF_FORMAT_ID: u64 = 1 << 2;
const PERF_FORMAT_GROUP: u64 = 1 << 3;

const ATTR_DISABLED: u64 = 1 << 0;
const ATTR_EXCLUDE_KERNEL: u64 = 1 << 5;
const ATTR_EXCLUDE_HV: u64 = 1 << 6;
const ATTR_FREQ: u64 = 1 << 10;
const ATTR_ENABLE_ON_EXEC: u64 = 1 << 12;

const PERF_FLAG_FD_CLOEXEC: libc::c_ulong = 1 << 3;

const PERF_EVENT_IOC_ENABLE: libc::c_ulong = 0x2400;
const PERF_EVENT_IOC_ID: libc::c_ulong = 0x8008_2407;

const PERF_RECORD_LOST: u32 = 2;
const PERF_RECORD_SAMPLE: u32 = 9;

/// Call-chain entries at or above this value are context markers.
const PERF_CONTEXT_MAX: u64 = (-4095i64) as u64;

const RING_DATA_PAGES: usize = 64;

/// `struct perf_event_attr`, `PERF_ATTR_SIZE_VER5` layout.
#[repr(C)]
#[derive(Default)]
struct PerfEventAttr {
    type_: u32,
    size: u32,
    config: u64,
    sample_period_or_freq: u64,
    sample_type: u64,
    read_format: u64,
    flags: u64,
    wakeup_events: u32,
    bp_type: u32,
    config1: u64,
    config2: u64,
    branch_sample_type: u64,
    sample_regs_user: u64,
    sample_stack_user: u32,
    clockid: i32,
    sample_regs_intr: u64,
    aux_watermark: u32,
    sample_max_stack: u16,
    reserved_2: u16,
}

fn hardware_config(name: &str) -> Option<u64> {
    Some(match name {
        "cycles" => 0,
        "instructions" => 1,
        "cache-references" => 2,
        "cache-misses" => 3,
        "branch-misses" => 5,
        _ => return None,
    })
}

fn event_type_config(e: &EventDescriptor) -> Result<(u32, u64), SamplingError> {
    match e.kind {
        EventKind::StandardHardware => hardware_config(&e.name)
            .map(|c| (PERF_TYPE_HARDWARE, c))
            .ok_or_else(|| SamplingError::BackendUnavailable(format!("no hardware encoding for `{}`", e.name))),
        EventKind::VendorRaw => Ok((PERF_TYPE_RAW, e.raw_code)),
    }
}

fn paranoid_level() -> String {
    std::fs::read_to_string("/proc/sys/kernel/perf_event_paranoid")
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|_| "unknown".into())
}

fn open_error(event: &str, err: std::io::Error) -> SamplingError {
    match err.raw_os_error() {
        Some(libc::EACCES) | Some(libc::EPERM) => SamplingError::PermissionDenied {
            paranoid: paranoid_level(),
        },
        _ => SamplingError::BackendUnavailable(format!("perf_event_open({event}): {err}")),
    }
}

fn perf_event_open(attr: &PerfEventAttr, pid: i32, group_fd: RawFd, name: &str) -> Result<OwnedFd, SamplingError> {
    // SAFETY: attr is a valid, fully initialised perf_event_attr of the size it declares.
    let fd = unsafe {
        libc::syscall(
            libc::SYS_perf_event_open,
            attr as *const PerfEventAttr,
            pid as libc::pid_t,
            -1 as libc::c_int,
            group_fd as libc::c_int,
            PERF_FLAG_FD_CLOEXEC,
        )
    };
    if fd < 0 {
        return Err(open_error(name, std::io::Error::last_os_error()));
    }
    // SAFETY: the kernel returned a fresh descriptor we now own.
    Ok(unsafe { OwnedFd::from_raw_fd(fd as RawFd) })
}

fn event_id(fd: &OwnedFd) -> Result<u64, SamplingError> {
    let mut id = 0u64;
    // SAFETY: PERF_EVENT_IOC_ID writes one u64 through the pointer.
    let rc = unsafe { libc::ioctl(fd.as_raw_fd(), PERF_EVENT_IOC_ID as _, &mut id as *mut u64) };
    if rc < 0 {
        return Err(SamplingError::BackendUnavailable(format!(
            "PERF_EVENT_IOC_ID: {}",
            std::io::Error::last_os_error()
        )));
    }
    Ok(id)
}

struct OpenGroup {
    leader: OwnedFd,
    _members: Vec<OwnedFd>,
    names_by_id: HashMap<u64, String>,
}

fn open_group(
    leader: &EventDescriptor,
    members: &[&EventDescriptor],
    pid: i32,
    sample_hz: Option<u32>,
    enable_on_exec: bool,
) -> Result<OpenGroup, SamplingError> {
    let read_format =
        PERF_FORMAT_GROUP | PERF_FORMAT_ID | PERF_FORMAT_TOTAL_TIME_ENABLED | PERF_FORMAT_TOTAL_TIME_RUNNING;
    let base_flags = ATTR_EXCLUDE_KERNEL | ATTR_EXCLUDE_HV;

    let (type_, config) = event_type_config(leader)?;
    let mut attr = PerfEventAttr {
        type_,
        size: std::mem::size_of::<PerfEventAttr>() as u32,
        config,
        read_format,
        flags: base_flags | ATTR_DISABLED | if enable_on_exec { ATTR_ENABLE_ON_EXEC } else { 0 },
        ..Default::default()
    };
    if let Some(hz) = sample_hz {
        attr.sample_period_or_freq = u64::from(hz);
        attr.flags |= ATTR_FREQ;
        attr.sample_type =
            PERF_SAMPLE_IP | PERF_SAMPLE_TID | PERF_SAMPLE_TIME | PERF_SAMPLE_READ | PERF_SAMPLE_CALLCHAIN;
        attr.wakeup_events = 1;
    }
    let leader_fd = perf_event_open(&attr, pid, -1, &leader.name)?;
    let mut names_by_id = HashMap::new();
    names_by_id.insert(event_id(&leader_fd)?, leader.name.clone());

    let mut member_fds = Vec::with_capacity(members.len());
    for m in members {
        let (type_, config) = event_type_config(m)?;
        let attr = PerfEventAttr {
            type_,
            size: std::mem::size_of::<PerfEventAttr>() as u32,
            config,
            read_format,
            flags: base_flags,
            ..Default::default()
        };
        let fd = perf_event_open(&attr, pid, leader_fd.as_raw_fd(), &m.name)?;
        names_by_id.insert(event_id(&fd)?, m.name.clone());
        member_fds.push(fd);
    }
    Ok(OpenGroup {
        leader: leader_fd,
        _members: member_fds,
        names_by_id,
    })
}

fn enable(fd: &OwnedFd) -> Result<(), SamplingError> {
    // SAFETY: plain ioctl on an owned perf fd.
    let rc = unsafe { libc::ioctl(fd.as_raw_fd(), PERF_EVENT_IOC_ENABLE as _, 0) };
    if rc < 0 {
        return Err(SamplingError::BackendUnavailable(format!(
            "PERF_EVENT_IOC_ENABLE: {}",
            std::io::Error::last_os_error()
        )));
    }
    Ok(())
}

/// A child held just before `execvp` until the counters are attached.
struct HeldChild {
    pid: i32,
    release_fd: Option<OwnedFd>,
    exited: Option<i32>,
}

impl HeldChild {
    fn spawn(argv: &[String]) -> Result<Self, SamplingError> {
        if argv.is_empty() {
            return Err(SamplingError::BackendUnavailable("empty command".into()));
        }
        let cargs: Vec<CString> = argv
            .iter()
            .map(|a| CString::new(a.as_bytes()))
            .collect::<Result<_, _>>()
            .map_err(|_| SamplingError::BackendUnavailable("command contains a NUL byte".into()))?;
        let mut ptrs: Vec<*const libc::c_char> = cargs.iter().map(|c| c.as_ptr()).collect();
        ptrs.push(std::ptr::null());

        let mut fds = [0 as libc::c_int; 2];
        // SAFETY: fds has room for two descriptors.
        if unsafe { libc::pipe2(fds.as_mut_ptr(), libc::O_CLOEXEC) } < 0 {
            return Err(SamplingError::BackendUnavailable(format!(
                "pipe: {}",
                std::io::Error::last_os_error()
            )));
        }
        // SAFETY: fork; the child only calls async-signal-safe functions before exec.
        let pid = unsafe { libc::fork() };
        if pid < 0 {
            return Err(SamplingError::BackendUnavailable(format!(
                "fork: {}",
                std::io::Error::last_os_error()
            )));
        }
        if pid == 0 {
            unsafe {
                libc::close(fds[1]);
                let mut byte = 0u8;
                libc::read(fds[0], &mut byte as *mut u8 as *mut libc::c_void, 1);
                libc::execvp(ptrs[0], ptrs.as_ptr());
                libc::_exit(127);
            }
        }
        // SAFETY: both ends are open descriptors owned by this process.
        unsafe {
            libc::close(fds[0]);
        }
        Ok(Self {
            pid,
            release_fd: Some(unsafe { OwnedFd::from_raw_fd(fds[1]) }),
            exited: None,
        })
    }

    fn release(&mut self) {
        if let Some(fd) = self.release_fd.take() {
            let byte = 1u8;
            // SAFETY: writing one byte to our pipe end.
            unsafe {
                libc::write(fd.as_raw_fd(), &byte as *const u8 as *const libc::c_void, 1);
            }
        }
    }

    fn poll_exit(&mut self, block: bool) -> Option<i32> {
        if self.exited.is_none() {
            let mut status = 0;
            let flags = if block { 0 } else { libc::WNOHANG };
            // SAFETY: waiting on our own child.
            let rc = unsafe { libc::waitpid(self.pid, &mut status, flags) };
            if rc == self.pid {
                let code = if libc::WIFEXITED(status) {
                    libc::WEXITSTATUS(status)
                } else {
                    128 + libc::WTERMSIG(status)
                };
                self.exited = Some(code);
            } else if rc < 0 {
                self.exited = Some(-1);
            }
        }
        self.exited
    }
}

impl Drop for HeldChild {
    fn drop(&mut self) {
        if self.exited.is_none() {
            // SAFETY: signalling and reaping our own child.
            unsafe {
                libc::kill(self.pid, libc::SIGKILL);
            }
            self.release();
            self.poll_exit(true);
        }
    }
}

fn process_alive(pid: i32) -> bool {
    // SAFETY: signal 0 only checks existence.
    unsafe { libc::kill(pid, 0) == 0 || *libc::__errno_location() == libc::EPERM }
}

fn check_pid(pid: i32) -> Result<(), SamplingError> {
    if pid <= 0 || !std::path::Path::new(&format!("/proc/{pid}")).exists() {
        return Err(SamplingError::BackendUnavailable(format!("no such process: {pid}")));
    }
    Ok(())
}

enum Tracee {
    Child(HeldChild),
    Attached(i32),
}

impl Tracee {
    fn start(target: &Target) -> Result<Self, SamplingError> {
        match target {
            Target::Command(argv) => Ok(Tracee::Child(HeldChild::spawn(argv)?)),
            Target::Pid(pid) => {
                check_pid(*pid)?;
                Ok(Tracee::Attached(*pid))
            }
        }
    }

    fn pid(&self) -> i32 {
        match self {
            Tracee::Child(c) => c.pid,
            Tracee::Attached(p) => *p,
        }
    }

    fn finished(&mut self, block: bool) -> bool {
        match self {
            Tracee::Child(c) => c.poll_exit(block).is_some(),
            Tracee::Attached(p) => {
                if block {
                    while process_alive(*p) {
                        std::thread::sleep(std::time::Duration::from_millis(50));
                    }
                }
                !process_alive(*p)
            }
        }
    }

    fn exit_code(&self) -> Option<i32> {
        match self {
            Tracee::Child(c) => c.exited,
            Tracee::Attached(_) => None,
        }
    }
}

/// Decodes a `PERF_FORMAT_GROUP | ID | TOTAL_TIME_*` read, scaling values by
/// `enabled / running` when the group was multiplexed.
fn decode_group_read(buf: &[u8], names_by_id: &HashMap<u64, String>) -> Option<IndexMap<String, u64>> {
    let mut words = buf.chunks_exact(8).map(|c| u64::from_ne_bytes(c.try_into().unwrap()));
    let nr = words.next()? as usize;
    let enabled = words.next()?;
    let running = words.next()?;
    let mut out = IndexMap::with_capacity(nr);
    for _ in 0..nr {
        let value = words.next()?;
        let id = words.next()?;
        let scaled = if running > 0 && running < enabled {
            ((value as u128 * enabled as u128) / running as u128) as u64
        } else {
            value
        };
        if let Some(name) = names_by_id.get(&id) {
            out.insert(name.clone(), scaled);
        }
    }
    Some(out)
}

/// Totals from a counting-only run.
#[derive(Debug, Clone)]
pub struct CountResult {
    pub totals: IndexMap<String, u64>,
    pub exit_code: Option<i32>,
}

/// Runs the target to completion with every group of `plan` counting.
pub fn count(plan: &GroupPlan, target: &Target) -> Result<CountResult, SamplingError> {
    let mut tracee = Tracee::start(target)?;
    let on_exec = matches!(tracee, Tracee::Child(_));
    let groups: Vec<OpenGroup> = plan
        .multiplexed_groups()
        .iter()
        .map(|members| open_group(&plan.leader, members, tracee.pid(), None, on_exec))
        .collect::<Result<_, _>>()?;
    match &mut tracee {
        Tracee::Child(c) => c.release(),
        Tracee::Attached(_) => groups.iter().try_for_each(|g| enable(&g.leader))?,
    }
    tracee.finished(true);

    let mut totals = IndexMap::new();
    for name in plan.event_names() {
        totals.insert(name.to_string(), 0);
    }
    for (i, g) in groups.iter().enumerate() {
        let mut buf = vec![0u8; 8 * (3 + 2 * (g.names_by_id.len()))];
        // SAFETY: reading into a buffer of the stated length.
        let n = unsafe { libc::read(g.leader.as_raw_fd(), buf.as_mut_ptr() as *mut libc::c_void, buf.len()) };
        if n <= 0 {
            return Err(SamplingError::BackendUnavailable(format!(
                "group read: {}",
                std::io::Error::last_os_error()
            )));
        }
        let values = decode_group_read(&buf[..n as usize], &g.names_by_id)
            .ok_or_else(|| SamplingError::BackendUnavailable("short group read".into()))?;
        for (name, v) in values {
            // Only the first group's copy of the leader is reported.
            if name == plan.leader.name && i > 0 {
                continue;
            }
            totals.insert(name, v);
        }
    }
    Ok(CountResult {
        totals,
        exit_code: tracee.exit_code(),
    })
}

struct RingBuffer {
    base: *mut u8,
    len: usize,
    page: usize,
}

// SAFETY: the mapping is only touched through &mut self by one reader.
unsafe impl Send for RingBuffer {}

impl RingBuffer {
    fn map(fd: &OwnedFd) -> Result<Self, SamplingError> {
        // SAFETY: sysconf has no preconditions.
        let page = unsafe { libc::sysconf(libc::_SC_PAGESIZE) } as usize;
        let len = page * (1 + RING_DATA_PAGES);
        // SAFETY: mapping a perf fd as documented in perf_event_open(2).
        let base = unsafe {
            libc::mmap(
                std::ptr::null_mut(),
                len,
                libc::PROT_READ | libc::PROT_WRITE,
                libc::MAP_SHARED,
                fd.as_raw_fd(),
                0,
            )
        };
        if base == libc::MAP_FAILED {
            return Err(SamplingError::BackendUnavailable(format!(
                "mmap ring buffer: {}",
                std::io::Error::last_os_error()
            )));
        }
        Ok(Self {
            base: base as *mut u8,
            len,
            page,
        })
    }

    /// Copies out every complete record between tail and head.
    fn drain(&mut self) -> Vec<(u32, Vec<u8>)> {
        let data_size = (self.len - self.page) as u64;
        // SAFETY: data_head/data_tail live at fixed offsets in the first page.
        let head_ptr = unsafe { self.base.add(1024) } as *const u64;
        let tail_ptr = unsafe { self.base.add(1032) } as *mut u64;
        let head = unsafe { std::ptr::read_volatile(head_ptr) };
        fence(Ordering::Acquire);
        let mut tail = unsafe { std::ptr::read_volatile(tail_ptr) };
        let data = unsafe { std::slice::from_raw_parts(self.base.add(self.page), data_size as usize) };

        let copy = |from: u64, len: usize| -> Vec<u8> {
            let mut out = Vec::with_capacity(len);
            let start = (from % data_size) as usize;
            let first = len.min(data.len() - start);
            out.extend_from_slice(&data[start..start + first]);
            out.extend_from_slice(&data[..len - first]);
            out
        };

        let mut records = Vec::new();
        while tail + 8 <= head {
            let hdr = copy(tail, 8);
            let type_ = u32::from_ne_bytes(hdr[0..4].try_into().unwrap());
            let size = u16::from_ne_bytes(hdr[6..8].try_into().unwrap()) as u64;
            if size < 8 || tail + size > head {
                break;
            }
            records.push((type_, copy(tail + 8, size as usize - 8)));
            tail += size;
        }
        fence(Ordering::SeqCst);
        unsafe { std::ptr::write_volatile(tail_ptr, tail) };
        records
    }
}

impl Drop for RingBuffer {
    fn drop(&mut self) {
        // SAFETY: unmapping our own mapping.
        unsafe {
            libc::munmap(self.base as *mut libc::c_void, self.len);
        }
    }
}

fn decode_sample(body: &[u8], names_by_id: &HashMap<u64, String>) -> Option<SampleRecord> {
    let mut words = body.chunks_exact(8).map(|c| u64::from_ne_bytes(c.try_into().unwrap()));
    let ip = words.next()?;
    let pidtid = words.next()?;
    let time = words.next()?;
    let nr = words.next()? as usize;
    let _enabled = words.next()?;
    let _running = words.next()?;
    let mut counters = IndexMap::with_capacity(nr);
    for _ in 0..nr {
        let value = words.next()?;
        let id = words.next()?;
        if let Some(name) = names_by_id.get(&id) {
            counters.insert(name.clone(), value);
        }
    }
    let chain_len = words.next()? as usize;
    let mut callchain = Vec::with_capacity(chain_len);
    for _ in 0..chain_len {
        let addr = words.next()?;
        if addr < PERF_CONTEXT_MAX {
            callchain.push(addr);
        }
    }
    if callchain.is_empty() {
        callchain.push(ip);
    }
    Some(SampleRecord {
        timestamp_ns: time,
        pid: (pidtid & 0xffff_ffff) as u32 as i32,
        tid: (pidtid >> 32) as u32 as i32,
        pc: ip,
        callchain,
        counter_values: counters,
        // TODO: resolve addresses via /proc/<pid>/maps and the mapped ELF symbol tables.
        syms: None,
    })
}

pub struct LiveSession {
    tracee: Tracee,
    group: OpenGroup,
    ring: RingBuffer,
    pending: VecDeque<SampleRecord>,
    stats: SessionStats,
    required: Vec<String>,
    members_verified: Option<bool>,
    leader_is_proxy: bool,
}

impl LiveSession {
    pub fn open(plan: &GroupPlan, target: &Target) -> Result<Self, SamplingError> {
        let Some(hz) = plan.sample_frequency_hz else {
            return Err(SamplingError::BackendUnavailable(
                "a live session needs a sampling plan; use `count` for counting plans".into(),
            ));
        };
        let groups = plan.multiplexed_groups();
        if groups.len() > 1 {
            return Err(SamplingError::BackendUnavailable(
                "sampled groups larger than the counter budget cannot be multiplexed".into(),
            ));
        }
        let mut tracee = Tracee::start(target)?;
        let on_exec = matches!(tracee, Tracee::Child(_));
        let group = open_group(&plan.leader, &groups[0], tracee.pid(), Some(hz), on_exec)?;
        let ring = RingBuffer::map(&group.leader)?;
        match &mut tracee {
            Tracee::Child(c) => c.release(),
            Tracee::Attached(_) => enable(&group.leader)?,
        }
        Ok(Self {
            tracee,
            group,
            ring,
            pending: VecDeque::new(),
            stats: SessionStats::default(),
            required: plan.event_names().into_iter().map(String::from).collect(),
            members_verified: None,
            leader_is_proxy: plan.leader_is_proxy,
        })
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    /// Whether the first sample carried live member values. Concurrent
    /// member sampling behind a proxy leader is observed platform behaviour,
    /// not an architectural guarantee, so it is checked rather than assumed.
    pub fn members_verified(&self) -> Option<bool> {
        self.members_verified
    }

    fn fill(&mut self) {
        for (type_, body) in self.ring.drain() {
            match type_ {
                PERF_RECORD_SAMPLE => match decode_sample(&body, &self.group.names_by_id) {
                    Some(r) if self.required.iter().all(|n| r.counter_values.contains_key(n)) => {
                        if self.members_verified.is_none() {
                            let members_live = r
                                .counter_values
                                .iter()
                                .filter(|(n, _)| **n != self.required[0])
                                .any(|(_, v)| *v > 0);
                            self.members_verified =
                                Some(members_live || self.required.len() == 1 || !self.leader_is_proxy);
                        }
                        self.pending.push_back(r);
                    }
                    _ => self.stats.corrupt += 1,
                },
                PERF_RECORD_LOST if body.len() >= 16 => {
                    self.stats.lost += u64::from_ne_bytes(body[8..16].try_into().unwrap());
                }
                _ => {}
            }
        }
    }

    pub fn next_sample(&mut self) -> Result<Option<SampleRecord>, SamplingError> {
        loop {
            if let Some(r) = self.pending.pop_front() {
                self.stats.emitted += 1;
                return Ok(Some(r));
            }
            let done = self.tracee.finished(false);
            self.fill();
            if !self.pending.is_empty() {
                continue;
            }
            if done {
                return Ok(None);
            }
            let mut pfd = libc::pollfd {
                fd: self.group.leader.as_raw_fd(),
                events: libc::POLLIN,
                revents: 0,
            };
            // SAFETY: one valid pollfd.
            unsafe {
                libc::poll(&mut pfd, 1, 100);
            }
        }
    }

    pub fn exit_code(&self) -> Option<i32> {
        self.tracee.exit_code()
    }
}
