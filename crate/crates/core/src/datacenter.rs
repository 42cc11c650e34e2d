//! Physical and virtual resources of the node, plus the response time (multiple
//! M/M/1), linear power and VM pricing models evaluated once per time instance.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{Measurements, Reading};
use crate::workload::ServiceType;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DatacenterError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("out of range: {0}")]
    Range(String),
}

/// Host hardware. Power figures feed the linear utilization model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmSpec {
    pub cores: u32,
    pub mips_per_core: f64,
    pub ram_gb: u32,
    pub idle_power_w: f64,
    pub max_power_w: f64,
}

impl Default for PmSpec {
    /// IBM x3550 with two six-core Xeon X5675 sockets.
    fn default() -> Self {
        Self {
            cores: 12,
            mips_per_core: 3067.0,
            ram_gb: 256,
            idle_power_w: 93.0,
            max_power_w: 135.0,
        }
    }
}

impl PmSpec {
    pub fn validate(&self) -> Result<(), DatacenterError> {
        if self.cores == 0 {
            return Err(DatacenterError::Config("pm.cores must be >= 1".into()));
        }
        if self.mips_per_core.is_nan() || self.mips_per_core <= 0.0 {
            return Err(DatacenterError::Config("pm.mips_per_core must be > 0".into()));
        }
        if !(self.idle_power_w >= 0.0 && self.idle_power_w <= self.max_power_w) {
            return Err(DatacenterError::Config(
                "pm power requires 0 <= idle_power_w <= max_power_w".into(),
            ));
        }
        Ok(())
    }
}

/// General purpose EC2 instance types used for the VMs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VmType {
    #[serde(rename = "m4.large")]
    Large,
    #[serde(rename = "m4.xlarge")]
    XLarge,
    #[serde(rename = "m4.2xlarge")]
    DoubleXLarge,
}

impl VmType {
    /// Ordered cheapest first.
    pub const ALL: [VmType; 3] = [VmType::Large, VmType::XLarge, VmType::DoubleXLarge];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            VmType::Large => "m4.large",
            VmType::XLarge => "m4.xlarge",
            VmType::DoubleXLarge => "m4.2xlarge",
        }
    }

    pub fn vcpu_cores(self) -> u32 {
        match self {
            VmType::Large => 2,
            VmType::XLarge => 4,
            VmType::DoubleXLarge => 8,
        }
    }

    pub fn vcpu_ghz(self) -> f64 {
        2.4
    }

    pub fn ram_gb(self) -> u32 {
        match self {
            VmType::Large => 8,
            VmType::XLarge => 16,
            VmType::DoubleXLarge => 32,
        }
    }

    pub fn hourly_cost_usd(self) -> f64 {
        match self {
            VmType::Large => 0.1,
            VmType::XLarge => 0.2,
            VmType::DoubleXLarge => 0.4,
        }
    }
}

impl fmt::Display for VmType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a VM's MIPS capacity is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VmCapacity {
    /// vCPU cores times this MIPS rating per core.
    PerCore(f64),
    /// Same MIPS for every VM regardless of type.
    PerVm(f64),
}

impl Default for VmCapacity {
    /// 2.4 GHz vCPUs at roughly 2400 MIPS per core.
    fn default() -> Self {
        VmCapacity::PerCore(2400.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulingPolicy {
    #[default]
    SingleQueue,
    Edf,
    LeastSlack,
    MultiQueue,
    MultiDynamicQueue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConcurrencyMode {
    #[default]
    Single,
    MultiThread,
}

/// Multiplicative effective-service-rate factors for scheduler and threading policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyFactors {
    pub single_queue: f64,
    pub edf: f64,
    pub least_slack: f64,
    pub multi_queue: f64,
    pub multi_dynamic_queue: f64,
    pub single_thread: f64,
    pub multi_thread: f64,
}

impl Default for PolicyFactors {
    fn default() -> Self {
        Self {
            single_queue: 1.0,
            edf: 1.10,
            least_slack: 1.10,
            multi_queue: 1.05,
            multi_dynamic_queue: 1.10,
            single_thread: 1.0,
            multi_thread: 1.15,
        }
    }
}

impl PolicyFactors {
    pub fn scheduling(&self, policy: SchedulingPolicy) -> f64 {
        match policy {
            SchedulingPolicy::SingleQueue => self.single_queue,
            SchedulingPolicy::Edf => self.edf,
            SchedulingPolicy::LeastSlack => self.least_slack,
            SchedulingPolicy::MultiQueue => self.multi_queue,
            SchedulingPolicy::MultiDynamicQueue => self.multi_dynamic_queue,
        }
    }

    pub fn concurrency(&self, mode: ConcurrencyMode) -> f64 {
        match mode {
            ConcurrencyMode::Single => self.single_thread,
            ConcurrencyMode::MultiThread => self.multi_thread,
        }
    }
}

pub const DEFAULT_MAX_PM_NUM: u32 = 1000;

/// The PM/VM deployment that tactics transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub pm_num: u32,
    /// VM counts indexed by [`VmType::index`].
    pub vm_counts: [u32; 3],
    pub max_pm_num: u32,
    pub pm: PmSpec,
    pub vm_capacity: VmCapacity,
    pub scheduling: SchedulingPolicy,
    pub concurrency: ConcurrencyMode,
    pub policy_factors: PolicyFactors,
}

/// Ten hosts running five VMs of each type.
pub fn initial_deployment() -> ArchitectureConfig {
    ArchitectureConfig {
        pm_num: 10,
        vm_counts: [5, 5, 5],
        max_pm_num: DEFAULT_MAX_PM_NUM,
        pm: PmSpec::default(),
        vm_capacity: VmCapacity::default(),
        scheduling: SchedulingPolicy::default(),
        concurrency: ConcurrencyMode::default(),
        policy_factors: PolicyFactors::default(),
    }
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        initial_deployment()
    }
}

impl ArchitectureConfig {
    pub fn vm_count(&self, vm_type: VmType) -> u32 {
        self.vm_counts[vm_type.index()]
    }

    pub fn vm_count_mut(&mut self, vm_type: VmType) -> &mut u32 {
        &mut self.vm_counts[vm_type.index()]
    }

    pub fn total_vms(&self) -> u32 {
        self.vm_counts.iter().sum()
    }

    pub fn total_vm_cores(&self) -> u32 {
        VmType::ALL
            .iter()
            .map(|t| self.vm_count(*t) * t.vcpu_cores())
            .sum()
    }

    pub fn host_cores(&self) -> u32 {
        self.pm_num * self.pm.cores
    }

    /// Hosts needed to place `vm_cores` vCPU cores.
    pub fn hosts_for_cores(&self, vm_cores: u32) -> u32 {
        vm_cores.div_ceil(self.pm.cores).max(1)
    }

    pub fn min_hosts(&self) -> u32 {
        self.hosts_for_cores(self.total_vm_cores())
    }

    pub fn vms_fit(&self) -> bool {
        self.total_vm_cores() <= self.host_cores()
    }

    /// This configuration with `total` VMs, adding large VMs or removing the
    /// most expensive ones first, as the vertical tactics do.
    pub fn with_vm_total(&self, total: u32) -> Self {
        let mut c = self.clone();
        let current = c.total_vms();
        if total >= current {
            *c.vm_count_mut(VmType::Large) += total - current;
        } else {
            let mut remaining = current - total;
            for t in VmType::ALL.iter().rev() {
                let take = remaining.min(c.vm_count(*t));
                *c.vm_count_mut(*t) -= take;
                remaining -= take;
            }
        }
        c
    }

    pub fn vm_mips(&self, vm_type: VmType) -> f64 {
        match self.vm_capacity {
            VmCapacity::PerCore(m) => f64::from(vm_type.vcpu_cores()) * m,
            VmCapacity::PerVm(m) => m,
        }
    }

    pub fn provisioned_vm_mips(&self) -> f64 {
        VmType::ALL
            .iter()
            .map(|t| f64::from(self.vm_count(*t)) * self.vm_mips(*t))
            .sum()
    }

    /// Combined scheduler and concurrency service-rate factor.
    pub fn service_rate_factor(&self) -> f64 {
        self.policy_factors.scheduling(self.scheduling)
            * self.policy_factors.concurrency(self.concurrency)
    }

    /// Per-VM service rate (requests/s) of one VM of `vm_type`.
    pub fn service_rate(&self, vm_type: VmType, service: &ServiceType) -> f64 {
        self.vm_mips(vm_type) * self.service_rate_factor() / service.required_mips
    }

    pub fn validate(&self) -> Result<(), DatacenterError> {
        self.pm.validate()?;
        if self.max_pm_num == 0 {
            return Err(DatacenterError::Config("max_pm_num must be >= 1".into()));
        }
        if self.pm_num < 1 || self.pm_num > self.max_pm_num {
            return Err(DatacenterError::Config(format!(
                "pm_num {} outside [1, {}]",
                self.pm_num, self.max_pm_num
            )));
        }
        if self.total_vms() < 1 {
            return Err(DatacenterError::Config("at least one VM is required".into()));
        }
        if !self.vms_fit() {
            return Err(DatacenterError::Config(format!(
                "{} VM cores do not fit on {} hosts of {} cores",
                self.total_vm_cores(),
                self.pm_num,
                self.pm.cores
            )));
        }
        match self.vm_capacity {
            VmCapacity::PerCore(m) | VmCapacity::PerVm(m) if m > 0.0 => Ok(()),
            _ => Err(DatacenterError::Config("VM MIPS capacity must be > 0".into())),
        }
    }
}

impl fmt::Display for ArchitectureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} PMs, {} VMs ({}/{}/{})",
            self.pm_num,
            self.total_vms(),
            self.vm_counts[0],
            self.vm_counts[1],
            self.vm_counts[2]
        )
    }
}

/// Mean response time in ms with requests split evenly over every VM, each VM an
/// M/M/1 queue. Saturated when any VM's arrival rate reaches its service rate.
pub fn response_time_ms(
    config: &ArchitectureConfig,
    lambda_total: f64,
    service: &ServiceType,
) -> Result<Reading, DatacenterError> {
    if lambda_total.is_nan() || lambda_total < 0.0 {
        return Err(DatacenterError::Range(format!(
            "arrival rate must be >= 0, got {lambda_total}"
        )));
    }
    let n_vms = config.total_vms();
    if n_vms == 0 {
        return Err(DatacenterError::Config("no VMs to serve requests".into()));
    }
    let lambda_vm = lambda_total / f64::from(n_vms);
    let mut weighted = 0.0;
    for vm_type in VmType::ALL {
        let count = config.vm_count(vm_type);
        if count == 0 {
            continue;
        }
        let mu = config.service_rate(vm_type, service);
        if lambda_vm >= mu {
            return Ok(Reading::Saturated);
        }
        weighted += f64::from(count) * (1000.0 / (mu - lambda_vm));
    }
    Ok(Reading::Finite(weighted / f64::from(n_vms)))
}

/// Fraction of provisioned VM MIPS demanded by the arrival stream, capped at 1.
pub fn utilization(config: &ArchitectureConfig, lambda_total: f64, service: &ServiceType) -> f64 {
    let capacity = config.provisioned_vm_mips();
    if capacity <= 0.0 || lambda_total <= 0.0 {
        return 0.0;
    }
    (lambda_total * service.required_mips / capacity).min(1.0)
}

/// Energy of all running hosts over `duration_s`, linear in utilization.
pub fn energy_kwh(
    config: &ArchitectureConfig,
    utilization: f64,
    duration_s: f64,
) -> Result<f64, DatacenterError> {
    if duration_s.is_nan() || duration_s < 0.0 {
        return Err(DatacenterError::Range(format!(
            "duration must be >= 0, got {duration_s}"
        )));
    }
    if !(0.0..=1.0).contains(&utilization) {
        return Err(DatacenterError::Range(format!(
            "utilization must be in [0, 1], got {utilization}"
        )));
    }
    let pm = &config.pm;
    let power_w = pm.idle_power_w + (pm.max_power_w - pm.idle_power_w) * utilization;
    Ok(f64::from(config.pm_num) * power_w * duration_s / 3.6e6)
}

/// Operational cost of the running VMs over `duration_s`.
pub fn cost_usd(config: &ArchitectureConfig, duration_s: f64) -> f64 {
    let hourly: f64 = VmType::ALL
        .iter()
        .map(|t| f64::from(config.vm_count(*t)) * t.hourly_cost_usd())
        .sum();
    hourly * duration_s / 3600.0
}

/// Response time, energy and cost of one instance of `duration_s` seconds.
pub fn measure(
    config: &ArchitectureConfig,
    lambda_total: f64,
    service: &ServiceType,
    duration_s: f64,
) -> Result<Measurements, DatacenterError> {
    let u = utilization(config, lambda_total, service);
    Ok(Measurements {
        response_time_ms: response_time_ms(config, lambda_total, service)?,
        energy_kwh: energy_kwh(config, u, duration_s)?,
        cost_usd: cost_usd(config, duration_s),
    })
}
