#pragma once

// Shared vocabulary for the coherence-specialization toolkit: device classes,
// access kinds, the request-type lattice, and word-mask helpers.

#include <cassert>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace fcssim {

using Addr = std::uint64_t;

// Bitmask of words within one cache block, bit i = word i.  Blocks are at
// most 32 words wide (default geometry: 64B block / 4B word = 16 words).
using WordMask = std::uint32_t;

enum class DeviceClass : std::uint8_t { Cpu, Gpu };

enum class AccessKind : std::uint8_t { Load, Store, Rmw };

// Synchronization flavor attached to an access (always an RMW in generated
// traces; the model accepts it on any access).
enum class SyncKind : std::uint8_t { None, Acquire, Release, AcqRel };

// Memory-request vocabulary.  Plain types carry no store data; the *Data
// variants carry data and return the prior value (read-modify-write flavor
// for WT types, ownership-with-data-fetch for ReqO).
//
//   ReqV        read requested words, keep them self-invalidating (Valid)
//   ReqVo       ReqV sent directly to a predicted current owner
//   ReqS        read full line, register as sharer (writer-invalidated)
//   ReqWT       write words through to the shared cache
//   ReqWTo      write-through sent directly to a predicted current owner
//   ReqWTfwd    write-through that the shared cache forwards to the owner
//   ReqO        take ownership of words without fetching data
//   ReqOData    take ownership and fetch data
//   ReqWTData   write-through RMW, applied at the point of coherence
//   ReqWToData  write-through RMW sent to a predicted owner
//   ReqWTfwdData write-through RMW forwarded to the owner
enum class RequestType : std::uint8_t {
  ReqV,
  ReqVo,
  ReqS,
  ReqWT,
  ReqWTo,
  ReqWTfwd,
  ReqO,
  ReqOData,
  ReqWTData,
  ReqWToData,
  ReqWTfwdData,
};

inline constexpr int kNumRequestTypes = 11;

inline std::string_view to_string(RequestType t) {
  switch (t) {
    case RequestType::ReqV: return "ReqV";
    case RequestType::ReqVo: return "ReqVo";
    case RequestType::ReqS: return "ReqS";
    case RequestType::ReqWT: return "ReqWT";
    case RequestType::ReqWTo: return "ReqWTo";
    case RequestType::ReqWTfwd: return "ReqWTfwd";
    case RequestType::ReqO: return "ReqO";
    case RequestType::ReqOData: return "ReqO+data";
    case RequestType::ReqWTData: return "ReqWT+data";
    case RequestType::ReqWToData: return "ReqWTo+data";
    case RequestType::ReqWTfwdData: return "ReqWTfwd+data";
  }
  return "?";
}

inline std::string_view to_string(AccessKind k) {
  switch (k) {
    case AccessKind::Load: return "load";
    case AccessKind::Store: return "store";
    case AccessKind::Rmw: return "rmw";
  }
  return "?";
}

inline std::string_view to_string(SyncKind s) {
  switch (s) {
    case SyncKind::None: return "-";
    case SyncKind::Acquire: return "acq";
    case SyncKind::Release: return "rel";
    case SyncKind::AcqRel: return "acqrel";
  }
  return "?";
}

inline std::string_view to_string(DeviceClass d) {
  return d == DeviceClass::Cpu ? "cpu" : "gpu";
}

// Parse the canonical token (e.g. "ReqWTfwd+data"); nullopt on no match.
inline std::optional<RequestType> parse_request_type(std::string_view tok) {
  for (int i = 0; i < kNumRequestTypes; ++i) {
    const auto t = static_cast<RequestType>(i);
    if (to_string(t) == tok) return t;
  }
  return std::nullopt;
}

// --- request-type predicates ------------------------------------------------

inline bool is_data_variant(RequestType t) {
  return t == RequestType::ReqOData || t == RequestType::ReqWTData ||
         t == RequestType::ReqWToData || t == RequestType::ReqWTfwdData;
}

// Legal for a load access.
inline bool is_load_type(RequestType t) {
  return t == RequestType::ReqV || t == RequestType::ReqVo ||
         t == RequestType::ReqS || t == RequestType::ReqOData;
}

// Legal for a plain store access.
inline bool is_store_type(RequestType t) {
  return t == RequestType::ReqO || t == RequestType::ReqOData ||
         t == RequestType::ReqWT || t == RequestType::ReqWTo ||
         t == RequestType::ReqWTfwd;
}

// Legal for a read-modify-write access.
inline bool is_rmw_type(RequestType t) { return is_data_variant(t); }

// Types that leave the requester owning the words.
inline bool is_ownership_type(RequestType t) {
  return t == RequestType::ReqO || t == RequestType::ReqOData;
}

// Write-through family (data ends at the point of coherence, requester keeps
// at most a Valid copy).
inline bool is_wt_type(RequestType t) {
  switch (t) {
    case RequestType::ReqWT:
    case RequestType::ReqWTo:
    case RequestType::ReqWTfwd:
    case RequestType::ReqWTData:
    case RequestType::ReqWToData:
    case RequestType::ReqWTfwdData:
      return true;
    default:
      return false;
  }
}

// Types addressed to a predicted owner instead of the shared cache.
inline bool is_predicted_type(RequestType t) {
  return t == RequestType::ReqVo || t == RequestType::ReqWTo ||
         t == RequestType::ReqWToData;
}

// Types the shared cache may forward to (or that target) a remote owner and
// that may therefore be Nacked.  Everything else must never see a Nack.
inline bool is_forwardable_type(RequestType t) {
  return t == RequestType::ReqV || t == RequestType::ReqVo ||
         t == RequestType::ReqWTfwd || t == RequestType::ReqWTfwdData ||
         t == RequestType::ReqWTo || t == RequestType::ReqWToData;
}

// The type a predicted-owner request degrades to when prediction is
// unavailable (identity for everything else).
inline RequestType strip_prediction(RequestType t) {
  switch (t) {
    case RequestType::ReqVo: return RequestType::ReqV;
    case RequestType::ReqWTo: return RequestType::ReqWT;
    case RequestType::ReqWToData: return RequestType::ReqWTData;
    default: return t;
  }
}

// --- geometry ---------------------------------------------------------------

struct Geometry {
  std::uint32_t word_size = 4;    // bytes
  std::uint32_t block_size = 64;  // bytes

  std::uint32_t words_per_block() const { return block_size / word_size; }
  Addr block_of(Addr byte_addr) const { return byte_addr / block_size * block_size; }
  Addr word_addr(Addr block, unsigned word) const { return block + Addr{word} * word_size; }
  unsigned word_index(Addr byte_addr) const {
    return static_cast<unsigned>(byte_addr % block_size / word_size);
  }
  WordMask full_mask() const {
    const unsigned w = words_per_block();
    return w >= 32 ? ~WordMask{0} : (WordMask{1} << w) - 1;
  }
};

inline int popcount_mask(WordMask m) { return __builtin_popcount(m); }

inline bool mask_has(WordMask m, unsigned word) { return (m >> word) & 1u; }

}  // namespace fcssim
