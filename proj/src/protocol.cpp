#include "orthomix/protocol.hpp"

#include <string>

#include "orthomix/engine.hpp"
#include "orthomix/formats.hpp"

namespace orthomix {

namespace {

bool known_type(std::uint8_t t) {
    return t == static_cast<std::uint8_t>(MessageType::infer_request) ||
           t == static_cast<std::uint8_t>(MessageType::infer_response) ||
           t == static_cast<std::uint8_t>(MessageType::error);
}

void expect_type(const WireMessage& msg, MessageType type, const char* what) {
    if (msg.type != type) {
        throw ProtocolError(ErrorCode::malformed_frame,
                            std::string(what) + ": unexpected message type " +
                                std::to_string(static_cast<int>(msg.type)));
    }
}

}  // namespace

Bytes encode_frame(const WireMessage& msg) {
    if (msg.payload.size() > max_payload_size) {
        throw ProtocolError(ErrorCode::malformed_frame, "frame payload exceeds 64 MiB");
    }
    ByteWriter out;
    out.u8(static_cast<std::uint8_t>(msg.type));
    out.u32(static_cast<std::uint32_t>(msg.payload.size()));
    out.raw(msg.payload);
    return std::move(out).take();
}

FrameHeader decode_frame_header(std::span<const std::uint8_t> header) {
    if (header.size() < frame_header_size) throw ProtocolError(ErrorCode::malformed_frame, "short frame header");
    ByteReader in(header);
    const std::uint8_t type = in.u8();
    const std::uint32_t length = in.u32();
    if (!known_type(type)) {
        throw ProtocolError(ErrorCode::malformed_frame, "unknown message type " + std::to_string(type));
    }
    if (length > max_payload_size) {
        throw ProtocolError(ErrorCode::malformed_frame,
                            "payload length " + std::to_string(length) + " exceeds 64 MiB");
    }
    return {static_cast<MessageType>(type), length};
}

WireMessage decode_frame(std::span<const std::uint8_t> bytes) {
    const FrameHeader h = decode_frame_header(bytes);
    if (bytes.size() - frame_header_size != h.length) {
        throw ProtocolError(ErrorCode::malformed_frame, "frame length field does not match payload size");
    }
    const auto payload = bytes.subspan(frame_header_size);
    return {h.type, Bytes(payload.begin(), payload.end())};
}

WireMessage make_request(const InferRequest& req) {
    return {MessageType::infer_request, encode_cmxe(req.image, req.patch)};
}

WireMessage make_response(const InferResponse& resp) {
    ByteWriter out;
    out.u32(resp.predicted);
    out.u32(static_cast<std::uint32_t>(resp.logits.size()));
    out.f64s(resp.logits);
    return {MessageType::infer_response, std::move(out).take()};
}

WireMessage make_error(const ErrorReply& err) {
    ByteWriter out;
    out.u8(static_cast<std::uint8_t>(err.code));
    out.raw(std::span(reinterpret_cast<const std::uint8_t*>(err.detail.data()), err.detail.size()));
    return {MessageType::error, std::move(out).take()};
}

InferRequest parse_request(const WireMessage& msg) {
    expect_type(msg, MessageType::infer_request, "parse_request");
    try {
        CmxeImage img = decode_cmxe(msg.payload);
        return {std::move(img.image), img.patch};
    } catch (const FormatError& e) {
        throw ProtocolError(ErrorCode::malformed_frame, std::string("bad image payload: ") + e.what());
    }
}

InferResponse parse_response(const WireMessage& msg) {
    expect_type(msg, MessageType::infer_response, "parse_response");
    try {
        ByteReader in(msg.payload);
        InferResponse resp;
        resp.predicted = in.u32();
        const std::uint32_t count = in.u32();
        if (in.remaining() != static_cast<std::size_t>(count) * 8) {
            throw ProtocolError(ErrorCode::malformed_frame, "response logit count does not match payload");
        }
        resp.logits.resize(count);
        in.f64s(resp.logits);
        if (count > 0 && resp.predicted >= count) {
            throw ProtocolError(ErrorCode::malformed_frame, "predicted class outside the logit range");
        }
        return resp;
    } catch (const FormatError& e) {
        throw ProtocolError(ErrorCode::malformed_frame, std::string("bad response payload: ") + e.what());
    }
}

ErrorReply parse_error(const WireMessage& msg) {
    expect_type(msg, MessageType::error, "parse_error");
    if (msg.payload.empty()) throw ProtocolError(ErrorCode::malformed_frame, "empty error payload");
    const std::uint8_t code = msg.payload[0];
    if (code < 1 || code > 3) {
        throw ProtocolError(ErrorCode::malformed_frame, "unknown error code " + std::to_string(code));
    }
    return {static_cast<ErrorCode>(code), std::string(msg.payload.begin() + 1, msg.payload.end())};
}

WireMessage handle_request(const ConvMixerModel& model, const WireMessage& request) {
    try {
        const InferRequest req = parse_request(request);
        if (req.image.kind() != ImageKind::encrypted) {
            return make_error({ErrorCode::kind_violation, "provider accepts encrypted images only"});
        }
        const auto& g = model.geometry;
        if (req.patch != g.patch || req.image.channels() != g.channels) {
            return make_error({ErrorCode::geometry_mismatch,
                               "image patch " + std::to_string(req.patch) + " / channels " +
                                   std::to_string(req.image.channels()) + " do not match model patch " +
                                   std::to_string(g.patch) + " / channels " + std::to_string(g.channels)});
        }
        const Logits logits = forward(model, req.image);
        return make_response({static_cast<std::uint32_t>(logits.argmax()), logits.values});
    } catch (const ProtocolError& e) {
        return make_error({e.code(), e.what()});
    } catch (const DimensionError& e) {
        return make_error({ErrorCode::geometry_mismatch, e.what()});
    } catch (const std::exception& e) {
        return make_error({ErrorCode::malformed_frame, e.what()});
    }
}

}  // namespace orthomix
