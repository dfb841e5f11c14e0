import { EditOp, GenerationResponse, GraphDoc } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function post<T>(base: string, path: string, body: unknown): Promise<T> {
  const resp = await fetch(base + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) {
    const text = await resp.text();
    throw new ApiError(resp.status, text || resp.statusText);
  }
  return resp.json() as Promise<T>;
}

export interface SamplerOverrides {
  steps?: Partial<Record<"motion" | "action" | "specific", number>>;
  guidance?: number;
  eta?: number;
}

export class StudioApi {
  constructor(public base: string = "") {}

  health(): Promise<{ status: string; checkpoints: Record<string, string> }> {
    return fetch(this.base + "/health").then((r) => r.json());
  }

  parse(text: string): Promise<{ graph: GraphDoc }> {
    return post(this.base, "/parse", { text });
  }

  generate(req: { text?: string; graph?: GraphDoc; seed: number; length?: number;
                  sampler?: SamplerOverrides }): Promise<GenerationResponse> {
    return post(this.base, "/generate", req);
  }

  refine(req: { graph: GraphDoc; edits: EditOp[]; seed: number; length?: number;
                sampler?: SamplerOverrides }): Promise<GenerationResponse> {
    return post(this.base, "/refine", req);
  }
}

/**
 * Serializes refine calls: at most one request in flight; a submit issued
 * meanwhile waits its turn and picks up whatever edits are pending by then.
 */
export class RefineQueue {
  private chain: Promise<void> = Promise.resolve();
  private depth = 0;

  constructor(private run: (edits: EditOp[]) => Promise<void>,
              private takePending: () => EditOp[]) {}

  get busy(): boolean {
    return this.depth > 0;
  }

  submit(): Promise<void> {
    this.depth += 1;
    const turn = this.chain.then(async () => {
      const edits = this.takePending();
      await this.run(edits);
    });
    const settled = turn.finally(() => { this.depth -= 1; });
    this.chain = settled.catch(() => undefined);
    return settled;
  }
}
