#pragma once

// Byte-range access to remote objects.
//
// Two backends share the ObjectStore interface:
//   sim://<dir>    objects are plain files under <dir>; every get_range sleeps
//                  latency + nbytes / bandwidth to stand in for a cloud store.
//   s3://<bucket>  S3-compatible HTTP API (HEAD, ranged GET, ListObjectsV2)
//                  signed with AWS Signature V4.
//
// Backends are safe for concurrent get_range calls.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rollread/error.hpp"

namespace rollread {

struct ObjectRef {
  std::string store_uri;
  std::string key;
  // Filled by ObjectStore::object_size on first query.
  std::optional<std::uint64_t> size;
};

struct SimStoreParams {
  double latency = 0.0;     // seconds per request
  double bandwidth = 1e12;  // bytes per second
  std::filesystem::path backing_dir;
};

using ChunkSink = std::function<void(std::span<const std::uint8_t>)>;

// latency + nbytes / bandwidth, in seconds.
double sim_delay(const SimStoreParams& params, std::uint64_t nbytes);

class ObjectStore {
 public:
  virtual ~ObjectStore() = default;

  virtual std::string uri() const = 0;

  // Caches the result on `ref`.
  virtual std::uint64_t object_size(ObjectRef& ref) = 0;

  // Returns bytes [offset, min(offset + length, size)). Throws OutOfRange when
  // offset is at or past the end of the object.
  virtual Bytes get_range(const ObjectRef& ref, std::uint64_t offset,
                          std::uint64_t length) = 0;

  // Same range as get_range, handed to `sink` in order as it arrives. The
  // default delivers a single chunk once the whole range is in memory.
  virtual void get_range_into(const ObjectRef& ref, std::uint64_t offset,
                              std::uint64_t length, const ChunkSink& sink);

  // Lexicographically sorted keys starting with `prefix`.
  virtual std::vector<std::string> list_keys(std::string_view prefix) = 0;

  ObjectRef ref(std::string key) const { return {uri(), std::move(key), {}}; }
};

class SimStore final : public ObjectStore {
 public:
  explicit SimStore(SimStoreParams params);

  std::string uri() const override;
  std::uint64_t object_size(ObjectRef& ref) override;
  Bytes get_range(const ObjectRef& ref, std::uint64_t offset,
                  std::uint64_t length) override;
  // Chunk i is released once latency + (bytes through chunk i) / bandwidth
  // has elapsed, so the sink's work overlaps the simulated transfer.
  void get_range_into(const ObjectRef& ref, std::uint64_t offset,
                      std::uint64_t length, const ChunkSink& sink) override;
  std::vector<std::string> list_keys(std::string_view prefix) override;

  const SimStoreParams& params() const { return params_; }

  // Writes an object directly into the backing directory (no delay).
  void put(const std::string& key, const Bytes& payload);
  std::filesystem::path path_of(const std::string& key) const;

 private:
  SimStoreParams params_;
};

struct S3Credentials {
  std::string access_key;
  std::string secret_key;
  std::string session_token;

  // AWS_ACCESS_KEY_ID, AWS_SECRET_ACCESS_KEY, AWS_SESSION_TOKEN.
  static S3Credentials from_env();
};

struct S3Options {
  std::string bucket;
  // scheme://host[:port]; path-style addressing is used against it.
  std::string endpoint;
  std::string region = "us-east-1";
  S3Credentials credentials;
  int retries = 1;
  std::chrono::seconds timeout{30};

  // Fills endpoint and region from AWS_ENDPOINT_URL, AWS_REGION and
  // AWS_DEFAULT_REGION when set.
  static S3Options from_env(std::string bucket);
};

// Inputs and outputs of AWS Signature Version 4 request signing.
struct SigV4Request {
  std::string method;
  std::string host;
  std::string path;  // already URI-encoded
  std::map<std::string, std::string> query;  // raw, encoded during signing
  std::map<std::string, std::string> headers;  // lower-case names
  std::string payload_hash;
  std::string amz_date;  // YYYYMMDDTHHMMSSZ
};

struct SigV4Result {
  std::string canonical_request;
  std::string string_to_sign;
  std::string signature;
  std::string authorization;
};

SigV4Result sign_v4(const SigV4Request& request, const S3Credentials& creds,
                    std::string_view region, std::string_view service = "s3");

std::string uri_encode(std::string_view text, bool encode_slash);
std::string sha256_hex(std::string_view data);

class S3Store final : public ObjectStore {
 public:
  explicit S3Store(S3Options options);
  ~S3Store() override;

  std::string uri() const override;
  std::uint64_t object_size(ObjectRef& ref) override;
  Bytes get_range(const ObjectRef& ref, std::uint64_t offset,
                  std::uint64_t length) override;
  std::vector<std::string> list_keys(std::string_view prefix) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StoreOptions {
  std::string uri;  // sim://<dir> or s3://<bucket>
  double sim_latency = 0.0;
  double sim_bandwidth = 1e12;
  std::string s3_endpoint;  // overrides AWS_ENDPOINT_URL
  int retries = 1;
};

std::unique_ptr<ObjectStore> open_store(const StoreOptions& options);

}  // namespace rollread
