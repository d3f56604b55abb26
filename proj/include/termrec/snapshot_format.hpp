#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "termrec/cooccurrence.hpp"
#include "termrec/records.hpp"

// Snapshot file layout, version 1. All integers are little-endian.
//
//   offset  size  field
//   0       8     magic "TRMSNAP\0"
//   8       4     version (1)
//   12      4     header size in bytes, including the repo id
//   16      8     n_docs
//   24      8     snapshot sequence number
//   32      8     offset of the source-df table
//   40      8     offset of the target-df table
//   48      8     offset of the pair table
//   56      8     total file size
//   64      32    BLAKE2b-256 over bytes [0, 64) and [96, end)
//   96      4     repo id length L
//   100     L     repo id, UTF-8
//
// Term tables:  u64 count, then count x (u32 byte length, UTF-8 bytes, u64 df),
//               terms in strictly increasing byte order.
// Pair table:   u64 count, then count x (u32 source index, u32 target index, u64 df),
//               ordered by (source, target).

namespace termrec::snapshot {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kFixedHeaderSize = 100;

class CorruptSnapshot : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::byte> encode(const SnapshotId& id, const cooc::CooccurrenceIndex& index);

struct Decoded {
    SnapshotId id;
    cooc::CooccurrenceIndex index;
};

/// Throws CorruptSnapshot for anything other than a complete, checksummed,
/// internally consistent version-1 file.
Decoded decode(std::span<const std::byte> bytes);

}  // namespace termrec::snapshot
