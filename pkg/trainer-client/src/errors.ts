export class TransportError extends Error {
  readonly attempts: number;

  constructor(message: string, attempts: number) {
    super(message);
    this.name = "TransportError";
    this.attempts = attempts;
  }
}

export class ValidationError extends Error {
  readonly status: number;
  readonly serverDetail: unknown;

  constructor(status: number, serverDetail: unknown) {
    super(`request rejected with ${status}: ${JSON.stringify(serverDetail)}`);
    this.name = "ValidationError";
    this.status = status;
    this.serverDetail = serverDetail;
  }
}

export class ResponseFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ResponseFormatError";
  }
}
