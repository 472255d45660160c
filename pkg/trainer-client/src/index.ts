export { TrainerClient } from "./client.js";
export type { ClientOptions, EvidenceInput } from "./client.js";
export { ResponseFormatError, TransportError, ValidationError } from "./errors.js";
export type { AdvantagesResponse, EaraResponse, HealthResponse } from "./schemas.js";
