export interface GeoBoxJson {
  lat_min: number;
  lat_max: number;
  lon_min: number;
  lon_max: number;
}

export interface FilterSpecJson {
  taxon_id?: number;
  months?: number[];
  geo?: GeoBoxJson;
}

export interface SearchRequest {
  query_text: string;
  k: number;
  nprobe?: number;
  filters?: FilterSpecJson;
}

export interface Hit {
  observation_id: number;
  rank: number;
  score: number;
  taxon_path: number[];
  observed_at: string;
  latitude?: number;
  longitude?: number;
  image_url: string;
  marked: boolean;
}

export interface HealthInfo {
  status: string;
  corpus_size: number;
  dim: number;
  nlist: number;
}

export interface MarkResult {
  observation_id: number;
  marked: boolean;
  marked_at: string;
}

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function errorFrom(response: Response): Promise<ApiError> {
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") {
      message = body.error;
    }
  } catch {
    // non-JSON error body, keep the status text
  }
  return new ApiError(response.status, message);
}

async function requestJson<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    throw await errorFrom(response);
  }
  return (await response.json()) as T;
}

function postJson<T>(url: string, body: unknown): Promise<T> {
  return requestJson<T>(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
}

export function createApi(baseUrl = "") {
  return {
    health(): Promise<HealthInfo> {
      return requestJson<HealthInfo>(`${baseUrl}/v1/health`);
    },

    async createSession(): Promise<string> {
      const body = await postJson<{ session_id: string }>(`${baseUrl}/v1/sessions`, {});
      return body.session_id;
    },

    async search(sessionId: string, request: SearchRequest): Promise<Hit[]> {
      const body = await postJson<{ hits: Hit[] }>(
        `${baseUrl}/v1/sessions/${sessionId}/search`,
        request,
      );
      return body.hits;
    },

    setMark(sessionId: string, observationId: number, marked: boolean): Promise<MarkResult> {
      return postJson<MarkResult>(`${baseUrl}/v1/sessions/${sessionId}/marks`, {
        observation_id: observationId,
        marked,
      });
    },

    async exportCsv(sessionId: string): Promise<string> {
      const response = await fetch(`${baseUrl}/v1/sessions/${sessionId}/export.csv`);
      if (!response.ok) {
        throw await errorFrom(response);
      }
      return response.text();
    },
  };
}

export type Api = ReturnType<typeof createApi>;
