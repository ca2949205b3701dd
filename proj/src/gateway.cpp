#include "stork/gateway.hpp"

#include <mutex>

#include "json.hpp"

namespace stork {

namespace {

constexpr std::string_view kDirectoryBase = "/PEPS/anonymity/resources/nodes/citizen/";

nlohmann::json node_json(const NodeInfo& n) {
  return {{"url", n.url},
          {"modulus", to_base64(n.key.modulus)},
          {"exponent", to_base64(n.key.exponent)},
          {"weight", n.weight}};
}

}  // namespace

std::string_view to_string(TrustRole role) { return role == TrustRole::node ? "node" : "service_provider"; }

void TrustStore::add(std::string signer_id, RsaPublicKey key, TrustRole role) {
  if (signer_id.empty()) throw Error(ErrorCode::invalid_argument, "empty signer id");
  entries_.insert_or_assign(std::move(signer_id), TrustEntry{std::move(key), role});
}

bool TrustStore::remove(std::string_view signer_id) {
  auto it = entries_.find(signer_id);
  if (it == entries_.end()) return false;
  entries_.erase(it);
  return true;
}

const TrustEntry* TrustStore::find(std::string_view signer_id) const {
  auto it = entries_.find(signer_id);
  return it == entries_.end() ? nullptr : &it->second;
}

TrustMap TrustStore::as_map() const {
  TrustMap out;
  for (const auto& [id, entry] : entries_) out.emplace(id, entry.key);
  return out;
}

std::string_view to_string(BundleRejection reason) {
  switch (reason) {
    case BundleRejection::unknown_signer: return "unknown signer";
    case BundleRejection::bad_signature: return "bad signature";
    case BundleRejection::malformed: return "malformed";
  }
  return "unknown";
}

DirectoryFormat directory_format_from_string(std::string_view text) {
  if (text == "js") return DirectoryFormat::js;
  if (text == "json") return DirectoryFormat::json;
  if (text == "xml") return DirectoryFormat::xml;
  throw Error(ErrorCode::invalid_argument, "unknown directory format '" + std::string(text) + "'");
}

std::string directory_path(DirectoryFormat format) {
  std::string path(kDirectoryBase);
  switch (format) {
    case DirectoryFormat::js: return path + "js";
    case DirectoryFormat::json: return path + "json";
    case DirectoryFormat::xml: return path + "xml";
  }
  return path;
}

std::vector<NodeInfo> decode_node_directory_json(std::string_view text) {
  std::vector<NodeInfo> out;
  try {
    auto doc = nlohmann::json::parse(text);
    if (!doc.is_array()) throw Error(ErrorCode::malformed, "node directory is not an array");
    for (const auto& item : doc) {
      NodeInfo n;
      n.url = item.at("url").get<std::string>();
      n.key.modulus = from_base64(item.at("modulus").get<std::string>());
      n.key.exponent = from_base64(item.at("exponent").get<std::string>());
      n.weight = item.at("weight").get<double>();
      n.validate();
      out.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed, e.what());
  }
  return out;
}

Gateway::Gateway(TrustStore trust, std::vector<NodeInfo> directory, Forwarder forward)
    : trust_(std::move(trust)), directory_(std::move(directory)), forward_(std::move(forward)) {
  if (!forward_) throw Error(ErrorCode::invalid_argument, "gateway needs a forwarder");
}

IngestResult Gateway::ingest_bundle(const Bundle& bundle, TimeMs now) {
  IngestResult result;
  {
    std::shared_lock lock(mutex_);
    if (!bundle.signer_id || !bundle.signature) {
      result.rejection = BundleRejection::bad_signature;
    } else if (!trust_.find(*bundle.signer_id)) {
      result.rejection = BundleRejection::unknown_signer;
    } else if (bundle.sealed.empty()) {
      result.rejection = BundleRejection::malformed;
    } else {
      try {
        for (const auto& s : bundle.sealed) s.validate();
        if (!verify_bundle(bundle, trust_.as_map())) result.rejection = BundleRejection::bad_signature;
      } catch (const Error&) {
        result.rejection = BundleRejection::malformed;
      }
    }
  }
  if (result.rejection) {
    std::unique_lock w(mutex_);
    ++rejected_;
    return result;
  }

  for (const auto& sealed : bundle.sealed) {
    PackageResponse r;
    r.id = sealed.id;
    auto outcome = forward_(sealed.recipient, sealed, now);
    if (const auto* c = std::get_if<std::uint64_t>(&outcome)) {
      r.challenge = *c;
    } else {
      r.error = "transport failure";
    }
    result.responses.push_back(std::move(r));
  }
  std::unique_lock w(mutex_);
  forwarded_ += bundle.sealed.size();
  return result;
}

std::string Gateway::handle_request(const FormRequest& form, TimeMs now) {
  Bundle bundle;
  try {
    bundle = decode_bundle(form.get("bundle"));
  } catch (const Error& e) {
    {
      std::unique_lock w(mutex_);
      ++rejected_;
    }
    return response_error(ErrorCode::malformed, e.what());
  }
  auto result = ingest_bundle(bundle, now);
  if (!result.accepted()) return response_error(ErrorCode::not_authorized, to_string(*result.rejection));
  return response_packages(result.responses);
}

std::string Gateway::node_directory(DirectoryFormat format) const {
  std::shared_lock lock(mutex_);
  if (format == DirectoryFormat::xml) return encode_node_list(directory_);
  auto list = nlohmann::json::array();
  for (const auto& n : directory_) list.push_back(node_json(n));
  if (format == DirectoryFormat::json) return list.dump();
  return "var nodes = " + list.dump() + ";";
}

std::string Gateway::handle_get(std::string_view path) const {
  for (auto f : {DirectoryFormat::js, DirectoryFormat::json, DirectoryFormat::xml}) {
    if (path == directory_path(f)) return node_directory(f);
  }
  throw Error(ErrorCode::unknown_entry, "no such resource: " + std::string(path));
}

void Gateway::set_directory(std::vector<NodeInfo> directory) {
  std::unique_lock w(mutex_);
  directory_ = std::move(directory);
}

void Gateway::set_trust(TrustStore trust) {
  std::unique_lock w(mutex_);
  trust_ = std::move(trust);
}

std::vector<NodeInfo> Gateway::directory() const {
  std::shared_lock lock(mutex_);
  return directory_;
}

std::uint64_t Gateway::bundles_rejected() const {
  std::shared_lock lock(mutex_);
  return rejected_;
}

std::uint64_t Gateway::packages_forwarded() const {
  std::shared_lock lock(mutex_);
  return forwarded_;
}

}  // namespace stork
