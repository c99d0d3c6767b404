import type { ResponseBody, SessionPayload } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = fetch.bind(globalThis),
  ) {}

  private async post(path: string, body: unknown): Promise<Response> {
    return this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async createSession(participantId: string, group?: string): Promise<SessionPayload> {
    const payload: Record<string, string> = { participant_id: participantId };
    if (group) payload.group = group;
    const response = await this.post("/api/sessions", payload);
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as SessionPayload;
  }

  /**
   * Post one item response. Returns "delivered" on 201 and "duplicate" on a
   * 409 conflict, which a retry after a lost acknowledgement should treat as
   * success; anything else throws.
   */
  async postResponse(
    sessionId: string,
    body: ResponseBody,
  ): Promise<"delivered" | "duplicate"> {
    const response = await this.post(`/api/sessions/${sessionId}/responses`, body);
    if (response.status === 201) return "delivered";
    if (response.status === 409) return "duplicate";
    throw new ApiError(response.status, await response.text());
  }

  async exportCsv(): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/api/study/export`);
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return response.text();
  }
}
