//! Per-worker heap accounting.
//!
//! Workers that share a process cannot be told apart by the operating
//! system's resident-set numbers, so [`TrackingAllocator`] tags every
//! allocation with the tag of the allocating thread and keeps current and
//! peak byte counts per tag. A binary opts in with
//!
//! ```text
//! #[global_allocator]
//! static ALLOC: sigrefine_core::memory::TrackingAllocator = sigrefine_core::memory::TrackingAllocator;
//! ```
//!
//! Separate worker processes report their high-water mark instead
//! ([`process_peak_rss`]).

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU32, Ordering};

const MAX_TAGS: usize = 256;
const HEADER: usize = 16;

static ACTIVE: AtomicBool = AtomicBool::new(false);
static CURRENT: [AtomicI64; MAX_TAGS] = [const { AtomicI64::new(0) }; MAX_TAGS];
static PEAK: [AtomicI64; MAX_TAGS] = [const { AtomicI64::new(0) }; MAX_TAGS];
static GENERATION: [AtomicU32; MAX_TAGS] = [const { AtomicU32::new(0) }; MAX_TAGS];
static IN_USE: [AtomicBool; MAX_TAGS] = [const { AtomicBool::new(false) }; MAX_TAGS];

thread_local! {
    static TAG: Cell<u32> = const { Cell::new(0) };
}

fn current_tag() -> u32 {
    TAG.try_with(Cell::get).unwrap_or(0)
}

fn account(tag: u32, delta: i64) {
    let tag = tag as usize;
    let now = CURRENT[tag].fetch_add(delta, Ordering::Relaxed) + delta;
    if delta > 0 {
        PEAK[tag].fetch_max(now, Ordering::Relaxed);
    }
}

/// Header stored in front of every block: the tag and its generation.
/// Blocks outliving a released tag are not charged to its next user.
unsafe fn header(user: *mut u8) -> *mut [u32; 2] {
    user.sub(HEADER) as *mut [u32; 2]
}

fn outer(layout: Layout, size: usize) -> (Layout, usize) {
    let align = layout.align().max(HEADER);
    // requests near isize::MAX fail here instead of wrapping
    let full = Layout::from_size_align(size + align, align).expect("layout overflow");
    (full, align)
}

/// A [`System`] wrapper that counts bytes per worker tag.
pub struct TrackingAllocator;

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let (full, offset) = outer(layout, layout.size());
        let base = System.alloc(full);
        if base.is_null() {
            return base;
        }
        let user = base.add(offset);
        let tag = current_tag();
        header(user).write([tag, GENERATION[tag as usize].load(Ordering::Relaxed)]);
        account(tag, layout.size() as i64);
        if !ACTIVE.load(Ordering::Relaxed) {
            ACTIVE.store(true, Ordering::Relaxed);
        }
        user
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let (full, offset) = outer(layout, layout.size());
        let base = System.alloc_zeroed(full);
        if base.is_null() {
            return base;
        }
        let user = base.add(offset);
        let tag = current_tag();
        header(user).write([tag, GENERATION[tag as usize].load(Ordering::Relaxed)]);
        account(tag, layout.size() as i64);
        if !ACTIVE.load(Ordering::Relaxed) {
            ACTIVE.store(true, Ordering::Relaxed);
        }
        user
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        let (full, offset) = outer(layout, layout.size());
        let [tag, generation] = header(ptr).read();
        if GENERATION[tag as usize].load(Ordering::Relaxed) == generation {
            account(tag, -(layout.size() as i64));
        }
        System.dealloc(ptr.sub(offset), full);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let (full, offset) = outer(layout, layout.size());
        let base = System.realloc(ptr.sub(offset), full, new_size + offset);
        if base.is_null() {
            return base;
        }
        let user = base.add(offset);
        let [tag, generation] = header(user).read();
        if GENERATION[tag as usize].load(Ordering::Relaxed) == generation {
            account(tag, new_size as i64 - layout.size() as i64);
        }
        user
    }
}

/// Whether the tracking allocator is installed in this process.
pub fn is_tracking() -> bool {
    ACTIVE.load(Ordering::Relaxed)
}

/// A counter slot for one worker. Released on drop.
#[derive(Debug)]
pub struct MemoryTag(u32);

impl MemoryTag {
    /// Takes a free slot with zeroed counters; `None` if all are taken.
    pub fn acquire() -> Option<MemoryTag> {
        (1..MAX_TAGS).find_map(|i| {
            IN_USE[i]
                .compare_exchange(false, true, Ordering::AcqRel, Ordering::Relaxed)
                .ok()
                .map(|_| {
                    GENERATION[i].fetch_add(1, Ordering::Relaxed);
                    CURRENT[i].store(0, Ordering::Relaxed);
                    PEAK[i].store(0, Ordering::Relaxed);
                    MemoryTag(i as u32)
                })
        })
    }

    /// Charges allocations of the calling thread to this tag until the
    /// guard is dropped.
    pub fn enter(&self) -> TagGuard {
        let previous = TAG.with(|t| t.replace(self.0));
        TagGuard { previous }
    }

    pub fn current_bytes(&self) -> u64 {
        CURRENT[self.0 as usize].load(Ordering::Relaxed).max(0) as u64
    }

    pub fn peak_bytes(&self) -> u64 {
        PEAK[self.0 as usize].load(Ordering::Relaxed).max(0) as u64
    }
}

impl Drop for MemoryTag {
    fn drop(&mut self) {
        IN_USE[self.0 as usize].store(false, Ordering::Release);
    }
}

pub struct TagGuard {
    previous: u32,
}

impl Drop for TagGuard {
    fn drop(&mut self) {
        TAG.with(|t| t.set(self.previous));
    }
}

/// Peak resident set size of this process (`VmHWM`), where available.
pub fn process_peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    parse_vm_hwm(&status)
}

fn parse_vm_hwm(status: &str) -> Option<u64> {
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hwm_line() {
        let status = "Name:\tx\nVmPeak:\t 100 kB\nVmHWM:\t    2048 kB\nVmRSS:\t 10 kB\n";
        assert_eq!(parse_vm_hwm(status), Some(2048 * 1024));
        assert_eq!(parse_vm_hwm("Name: x\n"), None);
    }

    #[test]
    fn tags_are_recycled() {
        let a = MemoryTag::acquire().unwrap();
        let b = MemoryTag::acquire().unwrap();
        assert_ne!(a.0, b.0);
        drop(a);
        let c = MemoryTag::acquire().unwrap();
        assert_ne!(c.0, b.0);
        assert_eq!(c.peak_bytes(), 0);
    }
}
