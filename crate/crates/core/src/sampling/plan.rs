use serde::{Deserialize, Serialize};

use super::SamplingError;
use crate::platform::{EventDescriptor, ModeScope, PlatformProfile};

pub const DEFAULT_SAMPLE_FREQUENCY_HZ: u32 = 997;
pub const DEFAULT_COUNTER_BUDGET: usize = 8;
pub const MAX_SAMPLE_FREQUENCY_HZ: u32 = 100_000;

/// Proxy-leader preference when no requested event can sample by itself.
const PROXY_PREFERENCE: [ModeScope; 4] = [
    ModeScope::UserOnly,
    ModeScope::SupervisorOnly,
    ModeScope::MachineOnly,
    ModeScope::All,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRequest {
    pub event: EventDescriptor,
    pub want_sampling: bool,
    /// Only meaningful when `want_sampling` is set.
    pub sample_frequency_hz: u32,
}

impl EventRequest {
    pub fn counting(event: EventDescriptor) -> Self {
        Self {
            event,
            want_sampling: false,
            sample_frequency_hz: 0,
        }
    }

    pub fn sampled(event: EventDescriptor, sample_frequency_hz: u32) -> Self {
        Self {
            event,
            want_sampling: true,
            sample_frequency_hz,
        }
    }
}

/// A counter group: one leader plus members read together with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub leader: EventDescriptor,
    /// Request order preserved; never contains the leader.
    pub members: Vec<EventDescriptor>,
    /// `None` for a counting-only plan.
    pub sample_frequency_hz: Option<u32>,
    /// The leader was substituted because no requested event can raise
    /// overflow interrupts.
    pub leader_is_proxy: bool,
    pub counter_budget: usize,
}

impl GroupPlan {
    pub fn is_sampling(&self) -> bool {
        self.sample_frequency_hz.is_some()
    }

    /// Leader name followed by member names.
    pub fn event_names(&self) -> Vec<&str> {
        std::iter::once(self.leader.name.as_str())
            .chain(self.members.iter().map(|m| m.name.as_str()))
            .collect()
    }

    /// Members split into hardware groups of at most `counter_budget`
    /// counters (leader included), assigned round-robin in request order.
    /// Each group is scheduled with its own copy of the leader.
    pub fn multiplexed_groups(&self) -> Vec<Vec<&EventDescriptor>> {
        let per_group = self.counter_budget.saturating_sub(1).max(1);
        let n_groups = self.members.len().div_ceil(per_group).max(1);
        let mut groups = vec![Vec::new(); n_groups];
        for (i, m) in self.members.iter().enumerate() {
            groups[i % n_groups].push(m);
        }
        groups
    }

    pub fn describe(&self) -> String {
        let mut s = format!("leader: {}", self.leader.name);
        if self.leader_is_proxy {
            s.push_str(" (proxy)");
        }
        if !self.members.is_empty() {
            let names: Vec<_> = self.members.iter().map(|m| m.name.as_str()).collect();
            s.push_str(&format!(", members: [{}]", names.join(", ")));
        }
        match self.sample_frequency_hz {
            Some(hz) => s.push_str(&format!(", sampling at {hz} Hz")),
            None => s.push_str(", counting only"),
        }
        let groups = self.multiplexed_groups().len();
        if groups > 1 {
            s.push_str(&format!(", multiplexed over {groups} groups"));
        }
        s
    }
}

pub fn plan_groups(profile: &PlatformProfile, requests: &[EventRequest]) -> Result<GroupPlan, SamplingError> {
    plan_groups_with_budget(profile, requests, DEFAULT_COUNTER_BUDGET)
}

pub fn plan_groups_with_budget(
    profile: &PlatformProfile,
    requests: &[EventRequest],
    counter_budget: usize,
) -> Result<GroupPlan, SamplingError> {
    if requests.is_empty() {
        return Err(SamplingError::EmptyRequest);
    }

    let mut frequency = None;
    for r in requests.iter().filter(|r| r.want_sampling) {
        if !(1..=MAX_SAMPLE_FREQUENCY_HZ).contains(&r.sample_frequency_hz) {
            return Err(SamplingError::InvalidFrequency(r.sample_frequency_hz));
        }
        match frequency {
            None => frequency = Some(r.sample_frequency_hz),
            Some(f) if f != r.sample_frequency_hz => {
                return Err(SamplingError::FrequencyMismatch(f, r.sample_frequency_hz))
            }
            Some(_) => {}
        }
    }

    let mut requested: Vec<EventDescriptor> = Vec::with_capacity(requests.len());
    for r in requests {
        if !requested.iter().any(|e| e.name == r.event.name) {
            requested.push(r.event.clone());
        }
    }

    let Some(frequency) = frequency else {
        let leader = requested.remove(0);
        return Ok(GroupPlan {
            leader,
            members: requested,
            sample_frequency_hz: None,
            leader_is_proxy: false,
            counter_budget,
        });
    };

    // Capability is judged by the profile's own descriptor when it has one.
    let can_sample = |e: &EventDescriptor| {
        profile
            .event(&e.name)
            .map_or(e.sampling_capable, |p| p.sampling_capable)
    };

    if let Some(pos) = requested.iter().position(can_sample) {
        let leader = requested.remove(pos);
        let leader = profile.event(&leader.name).cloned().unwrap_or(leader);
        return Ok(GroupPlan {
            leader,
            members: requested,
            sample_frequency_hz: Some(frequency),
            leader_is_proxy: false,
            counter_budget,
        });
    }

    let proxy = PROXY_PREFERENCE
        .iter()
        .find_map(|scope| profile.sampling_capable_events().find(|e| e.mode_scope == *scope));
    match proxy {
        Some(leader) => Ok(GroupPlan {
            leader: leader.clone(),
            members: requested,
            sample_frequency_hz: Some(frequency),
            leader_is_proxy: true,
            counter_budget,
        }),
        None => Err(SamplingError::SamplingUnsupported {
            platform: profile.name.clone(),
            detail: profile.capability_summary(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::PlatformDb;

    fn req(profile: &PlatformProfile, name: &str, sampled: bool) -> EventRequest {
        let e = profile.event(name).unwrap().clone();
        if sampled {
            EventRequest::sampled(e, DEFAULT_SAMPLE_FREQUENCY_HZ)
        } else {
            EventRequest::counting(e)
        }
    }

    #[test]
    fn x60_uses_user_mode_proxy_leader() {
        let x60 = PlatformDb::embedded().by_name("spacemit-x60").unwrap();
        let plan = plan_groups(&x60, &[req(&x60, "cycles", true), req(&x60, "instructions", true)]).unwrap();
        assert_eq!(plan.leader.name, "u_mode_cycle");
        assert_eq!(plan.leader.mode_scope, ModeScope::UserOnly);
        assert!(plan.leader_is_proxy);
        assert_eq!(plan.event_names(), ["u_mode_cycle", "cycles", "instructions"]);
        assert_eq!(plan.sample_frequency_hz, Some(997));
        assert_eq!(plan.describe().split(',').next(), Some("leader: u_mode_cycle (proxy)"));
    }

    #[test]
    fn requested_capable_event_leads_without_proxy() {
        let x60 = PlatformDb::embedded().by_name("spacemit-x60").unwrap();
        let plan = plan_groups(
            &x60,
            &[req(&x60, "instructions", true), req(&x60, "s_mode_cycle", true)],
        )
        .unwrap();
        assert_eq!(plan.leader.name, "s_mode_cycle");
        assert!(!plan.leader_is_proxy);
        assert_eq!(plan.event_names(), ["s_mode_cycle", "instructions"]);
    }

    #[test]
    fn full_overflow_leads_with_cycles() {
        let c910 = PlatformDb::embedded().by_name("thead-c910").unwrap();
        let plan = plan_groups(&c910, &[req(&c910, "cycles", true)]).unwrap();
        assert_eq!(plan.leader.name, "cycles");
        assert!(plan.members.is_empty());
        assert!(!plan.leader_is_proxy);
    }

    #[test]
    fn u74_cannot_sample() {
        let u74 = PlatformDb::embedded().by_name("sifive-u74").unwrap();
        let err = plan_groups(&u74, &[req(&u74, "cycles", true)]).unwrap_err();
        assert!(matches!(err, SamplingError::SamplingUnsupported { .. }));
        assert!(err.to_string().contains("overflow interrupt support No"));
        // Counting still works.
        let plan = plan_groups(&u74, &[req(&u74, "cycles", false), req(&u74, "instructions", false)]).unwrap();
        assert!(!plan.is_sampling());
        assert_eq!(plan.leader.name, "cycles");
    }

    #[test]
    fn request_validation() {
        let x60 = PlatformDb::embedded().by_name("spacemit-x60").unwrap();
        assert!(matches!(plan_groups(&x60, &[]), Err(SamplingError::EmptyRequest)));
        let cycles = x60.event("cycles").unwrap().clone();
        let instr = x60.event("instructions").unwrap().clone();
        assert!(matches!(
            plan_groups(&x60, &[EventRequest::sampled(cycles.clone(), 0)]),
            Err(SamplingError::InvalidFrequency(0))
        ));
        assert!(matches!(
            plan_groups(&x60, &[EventRequest::sampled(cycles.clone(), 100_001)]),
            Err(SamplingError::InvalidFrequency(100_001))
        ));
        assert!(matches!(
            plan_groups(
                &x60,
                &[EventRequest::sampled(cycles, 100), EventRequest::sampled(instr, 200)]
            ),
            Err(SamplingError::FrequencyMismatch(100, 200))
        ));
    }

    #[test]
    fn duplicates_collapse() {
        let x60 = PlatformDb::embedded().by_name("spacemit-x60").unwrap();
        let plan = plan_groups(&x60, &[req(&x60, "cycles", true), req(&x60, "cycles", true)]).unwrap();
        assert_eq!(plan.event_names(), ["u_mode_cycle", "cycles"]);
    }

    #[test]
    fn budget_overflow_multiplexes_round_robin() {
        let c910 = PlatformDb::embedded().by_name("thead-c910").unwrap();
        let requests: Vec<_> = [
            "cycles",
            "instructions",
            "cache-references",
            "cache-misses",
            "branch-misses",
        ]
        .iter()
        .map(|n| req(&c910, n, false))
        .collect();
        let plan = plan_groups_with_budget(&c910, &requests, 3).unwrap();
        let groups: Vec<Vec<&str>> = plan
            .multiplexed_groups()
            .iter()
            .map(|g| g.iter().map(|e| e.name.as_str()).collect())
            .collect();
        assert_eq!(
            groups,
            [
                vec!["instructions", "cache-misses"],
                vec!["cache-references", "branch-misses"]
            ]
        );
        for g in plan.multiplexed_groups() {
            assert!(g.len() < 3);
        }
        let single = plan_groups(&c910, &requests).unwrap();
        assert_eq!(single.multiplexed_groups().len(), 1);
    }
}
