#include <httplib.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <thread>

#include "rollread/store.hpp"

namespace rollread {

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* value = std::getenv(name);
  return value && *value ? std::string(value) : fallback;
}

std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[data[i] >> 4];
    out[2 * i + 1] = kDigits[data[i] & 0xf];
  }
  return out;
}

std::string hmac_sha256(std::string_view key, std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
       reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest,
       &len);
  return std::string(reinterpret_cast<char*>(digest), len);
}

std::string amz_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[17];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// Extracts the text of every <tag>...</tag> occurrence.
std::vector<std::string> xml_values(const std::string& body, std::string_view tag) {
  std::vector<std::string> out;
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  std::size_t pos = 0;
  while ((pos = body.find(open, pos)) != std::string::npos) {
    pos += open.size();
    auto end = body.find(close, pos);
    if (end == std::string::npos) break;
    out.push_back(body.substr(pos, end - pos));
    pos = end + close.size();
  }
  return out;
}

std::string xml_unescape(std::string text) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  for (const auto& [entity, ch] : kEntities) {
    std::size_t pos = 0;
    while ((pos = text.find(entity, pos)) != std::string::npos) {
      text.replace(pos, entity.size(), 1, ch);
      ++pos;
    }
  }
  return text;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  return to_hex(digest, len);
}

std::string uri_encode(std::string_view text, bool encode_slash) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' ||
        (c == '/' && !encode_slash)) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kDigits[c >> 4]);
      out.push_back(kDigits[c & 0xf]);
    }
  }
  return out;
}

SigV4Result sign_v4(const SigV4Request& request, const S3Credentials& creds,
                    std::string_view region, std::string_view service) {
  SigV4Result result;

  std::string query;
  for (const auto& [k, v] : request.query) {
    if (!query.empty()) query += '&';
    query += uri_encode(k, true) + "=" + uri_encode(v, true);
  }

  auto headers = request.headers;
  headers["host"] = request.host;
  std::string canonical_headers;
  std::string signed_headers;
  for (const auto& [name, value] : headers) {
    canonical_headers += name + ":" + value + "\n";
    if (!signed_headers.empty()) signed_headers += ';';
    signed_headers += name;
  }

  result.canonical_request = request.method + "\n" + request.path + "\n" + query +
                             "\n" + canonical_headers + "\n" + signed_headers +
                             "\n" + request.payload_hash;

  const std::string date = request.amz_date.substr(0, 8);
  const std::string scope =
      date + "/" + std::string(region) + "/" + std::string(service) + "/aws4_request";
  result.string_to_sign = "AWS4-HMAC-SHA256\n" + request.amz_date + "\n" + scope +
                          "\n" + sha256_hex(result.canonical_request);

  auto key = hmac_sha256("AWS4" + creds.secret_key, date);
  key = hmac_sha256(key, region);
  key = hmac_sha256(key, service);
  key = hmac_sha256(key, "aws4_request");
  const auto sig = hmac_sha256(key, result.string_to_sign);
  result.signature =
      to_hex(reinterpret_cast<const unsigned char*>(sig.data()), sig.size());

  result.authorization = "AWS4-HMAC-SHA256 Credential=" + creds.access_key + "/" +
                         scope + ", SignedHeaders=" + signed_headers +
                         ", Signature=" + result.signature;
  return result;
}

S3Credentials S3Credentials::from_env() {
  return {env_or("AWS_ACCESS_KEY_ID"), env_or("AWS_SECRET_ACCESS_KEY"),
          env_or("AWS_SESSION_TOKEN")};
}

S3Options S3Options::from_env(std::string bucket) {
  S3Options opts;
  opts.bucket = std::move(bucket);
  opts.region = env_or("AWS_REGION", env_or("AWS_DEFAULT_REGION", "us-east-1"));
  opts.endpoint =
      env_or("AWS_ENDPOINT_URL", "https://s3." + opts.region + ".amazonaws.com");
  opts.credentials = S3Credentials::from_env();
  return opts;
}

struct S3Store::Impl {
  S3Options options;
  std::string scheme;
  std::string host_header;

  explicit Impl(S3Options opts) : options(std::move(opts)) {
    auto sep = options.endpoint.find("://");
    if (sep == std::string::npos) {
      throw Error(Errc::kInvalidArgument, "endpoint needs a scheme: " + options.endpoint);
    }
    scheme = options.endpoint.substr(0, sep);
    host_header = options.endpoint.substr(sep + 3);
    if (auto slash = host_header.find('/'); slash != std::string::npos) {
      host_header.resize(slash);
    }
    // httplib omits default ports from Host; mirror that so signatures match.
    if (scheme == "http" && host_header.ends_with(":80")) host_header.resize(host_header.size() - 3);
    if (scheme == "https" && host_header.ends_with(":443")) host_header.resize(host_header.size() - 4);
  }

  std::string object_path(std::string_view key) const {
    return "/" + uri_encode(options.bucket, true) + "/" + uri_encode(key, false);
  }

  httplib::Result send(const std::string& method, const std::string& path,
                       const std::map<std::string, std::string>& query,
                       const std::map<std::string, std::string>& extra) const {
    SigV4Request req;
    req.method = method;
    req.host = host_header;
    req.path = path;
    req.query = query;
    req.payload_hash = sha256_hex("");
    req.amz_date = amz_now();
    req.headers = extra;
    req.headers["x-amz-content-sha256"] = req.payload_hash;
    req.headers["x-amz-date"] = req.amz_date;
    if (!options.credentials.session_token.empty()) {
      req.headers["x-amz-security-token"] = options.credentials.session_token;
    }

    httplib::Headers headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);
    headers.emplace("Host", host_header);
    if (!options.credentials.access_key.empty()) {
      headers.emplace("Authorization",
                      sign_v4(req, options.credentials, options.region).authorization);
    }

    std::string target = path;
    char joiner = '?';
    for (const auto& [k, v] : query) {
      target += joiner + uri_encode(k, true) + "=" + uri_encode(v, true);
      joiner = '&';
    }

    httplib::Client client(scheme + "://" + host_header);
    client.set_url_encode(false);
    client.set_connection_timeout(options.timeout);
    client.set_read_timeout(options.timeout);
    if (method == "HEAD") return client.Head(target, headers);
    return client.Get(target, headers);
  }

  // Sends with up to `retries` extra attempts on transport failure or 5xx.
  httplib::Result send_retrying(const std::string& method, const std::string& path,
                                const std::map<std::string, std::string>& query,
                                const std::map<std::string, std::string>& extra) const {
    for (int attempt = 0;; ++attempt) {
      auto res = send(method, path, query, extra);
      const bool retryable = !res || res->status >= 500;
      if (!retryable || attempt >= options.retries) return res;
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }
};

S3Store::S3Store(S3Options options) : impl_(std::make_unique<Impl>(std::move(options))) {}
S3Store::~S3Store() = default;

std::string S3Store::uri() const { return "s3://" + impl_->options.bucket; }

std::uint64_t S3Store::object_size(ObjectRef& ref) {
  if (ref.size) return *ref.size;
  auto res = impl_->send_retrying("HEAD", impl_->object_path(ref.key), {}, {});
  if (!res) throw Error(Errc::kTransport, httplib::to_string(res.error()));
  if (res->status == 404) throw Error(Errc::kNotFound, ref.key);
  if (res->status != 200) {
    throw Error(Errc::kTransport, "HEAD " + ref.key + " -> " + std::to_string(res->status));
  }
  if (!res->has_header("Content-Length")) {
    throw Error(Errc::kTransport, "HEAD " + ref.key + " without Content-Length");
  }
  ref.size = std::stoull(res->get_header_value("Content-Length"));
  return *ref.size;
}

Bytes S3Store::get_range(const ObjectRef& ref, std::uint64_t offset,
                         std::uint64_t length) {
  auto sized = ref;
  const auto size = object_size(sized);
  if (offset >= size) {
    throw Error(Errc::kOutOfRange, ref.key + " offset " + std::to_string(offset));
  }
  if (length == 0) throw Error(Errc::kInvalidArgument, "zero-length range");
  const auto last = std::min(offset + length, size) - 1;
  auto res = impl_->send_retrying(
      "GET", impl_->object_path(ref.key), {},
      {{"range", "bytes=" + std::to_string(offset) + "-" + std::to_string(last)}});
  if (!res) throw Error(Errc::kTransport, httplib::to_string(res.error()));
  if (res->status == 404) throw Error(Errc::kNotFound, ref.key);
  if (res->status == 416) throw Error(Errc::kOutOfRange, ref.key);
  if (res->status != 206 && res->status != 200) {
    throw Error(Errc::kTransport, "GET " + ref.key + " -> " + std::to_string(res->status));
  }
  std::string_view body = res->body;
  // A server ignoring Range answers 200 with the whole object.
  if (res->status == 200 && body.size() == size) body = body.substr(offset, last + 1 - offset);
  if (body.size() != last + 1 - offset) {
    throw Error(Errc::kTransport, "short range body for " + ref.key);
  }
  return Bytes(body.begin(), body.end());
}

std::vector<std::string> S3Store::list_keys(std::string_view prefix) {
  std::vector<std::string> keys;
  std::string token;
  const std::string path = "/" + uri_encode(impl_->options.bucket, true);
  for (;;) {
    std::map<std::string, std::string> query{{"list-type", "2"},
                                             {"prefix", std::string(prefix)}};
    if (!token.empty()) query["continuation-token"] = token;
    auto res = impl_->send_retrying("GET", path, query, {});
    if (!res) throw Error(Errc::kTransport, httplib::to_string(res.error()));
    if (res->status != 200) {
      throw Error(Errc::kTransport, "list " + path + " -> " + std::to_string(res->status));
    }
    for (auto& key : xml_values(res->body, "Key")) keys.push_back(xml_unescape(key));
    auto truncated = xml_values(res->body, "IsTruncated");
    auto next = xml_values(res->body, "NextContinuationToken");
    if (truncated.empty() || truncated.front() != "true" || next.empty()) break;
    token = xml_unescape(next.front());
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::unique_ptr<ObjectStore> open_store(const StoreOptions& options) {
  const std::string_view uri = options.uri;
  if (uri.starts_with("sim://")) {
    SimStoreParams params;
    params.latency = options.sim_latency;
    params.bandwidth = options.sim_bandwidth;
    params.backing_dir = std::string(uri.substr(6));
    if (params.backing_dir.empty()) throw Error(Errc::kInvalidArgument, "sim:// needs a directory");
    return std::make_unique<SimStore>(std::move(params));
  }
  if (uri.starts_with("s3://")) {
    auto bucket = std::string(uri.substr(5));
    if (auto slash = bucket.find('/'); slash != std::string::npos) bucket.resize(slash);
    if (bucket.empty()) throw Error(Errc::kInvalidArgument, "s3:// needs a bucket");
    auto opts = S3Options::from_env(std::move(bucket));
    if (!options.s3_endpoint.empty()) opts.endpoint = options.s3_endpoint;
    opts.retries = options.retries;
    return std::make_unique<S3Store>(std::move(opts));
  }
  throw Error(Errc::kInvalidArgument, "unsupported store scheme: " + options.uri);
}

}  // namespace rollread
