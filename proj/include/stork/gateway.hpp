#pragma once

#include <functional>
#include <map>
#include <shared_mutex>
#include <string>
#include <vector>

#include "stork/node_relay.hpp"
#include "stork/wire.hpp"

namespace stork {

enum class TrustRole { service_provider, node };

std::string_view to_string(TrustRole role);

struct TrustEntry {
  RsaPublicKey key;
  TrustRole role = TrustRole::service_provider;
};

class TrustStore {
 public:
  void add(std::string signer_id, RsaPublicKey key, TrustRole role = TrustRole::service_provider);
  bool remove(std::string_view signer_id);
  const TrustEntry* find(std::string_view signer_id) const;
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  TrustMap as_map() const;

 private:
  std::map<std::string, TrustEntry, std::less<>> entries_;
};

enum class BundleRejection { unknown_signer, bad_signature, malformed };

std::string_view to_string(BundleRejection reason);

struct IngestResult {
  std::optional<BundleRejection> rejection;
  std::vector<PackageResponse> responses;  // input order

  bool accepted() const { return !rejection.has_value(); }
};

enum class DirectoryFormat { js, json, xml };

DirectoryFormat directory_format_from_string(std::string_view text);
std::string directory_path(DirectoryFormat format);
std::vector<NodeInfo> decode_node_directory_json(std::string_view json);

/// Delivers one sealed package to `url` and reports what came back.
using Forwarder = std::function<DeliveryResult(const std::string& url, const SealedPackage&, TimeMs now)>;

class Gateway {
 public:
  Gateway(TrustStore trust, std::vector<NodeInfo> directory, Forwarder forward);

  IngestResult ingest_bundle(const Bundle& bundle, TimeMs now);
  /// Form exchange: field "bundle" holds the bundle document.
  std::string handle_request(const FormRequest& form, TimeMs now);

  std::string node_directory(DirectoryFormat format) const;
  /// GET on one of the directory paths; throws unknown_entry otherwise.
  std::string handle_get(std::string_view path) const;

  void set_directory(std::vector<NodeInfo> directory);
  void set_trust(TrustStore trust);
  std::vector<NodeInfo> directory() const;

  std::uint64_t bundles_rejected() const;
  std::uint64_t packages_forwarded() const;

 private:
  mutable std::shared_mutex mutex_;
  TrustStore trust_;
  std::vector<NodeInfo> directory_;
  Forwarder forward_;
  std::uint64_t rejected_ = 0;
  std::uint64_t forwarded_ = 0;
};

}  // namespace stork
