import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { CHAT_CITED, RECORDS_CSV, makeStubFetch } from "./stub.js";

function client() {
  const { fetch, requests } = makeStubFetch();
  return { api: new ApiClient("", fetch), requests };
}

describe("ApiClient", () => {
  it("reads health", async () => {
    const { api } = client();
    expect(await api.health()).toEqual({ status: "ok", index_size: 3 });
  });

  it("posts chat questions and parses citations", async () => {
    const { api, requests } = client();
    const reply = await api.chat("which family tolerates low pH?", "sess-1");
    expect(reply).toEqual(CHAT_CITED);
    expect(requests).toContain("POST /api/chat");
  });

  it("throws ApiError with the server error code", async () => {
    const { api } = client();
    await expect(api.chat("")).rejects.toMatchObject({
      name: "ApiError",
      code: "EmptyQuestion",
      status: 400,
    });
    await expect(api.chunkText("missing:9")).rejects.toBeInstanceOf(ApiError);
  });

  it("fetches records in both formats", async () => {
    const { api } = client();
    const rows = await api.records();
    expect(rows).toHaveLength(2);
    expect(rows[0].values.crop_type).toBe("tomato");
    expect(await api.recordsCsv()).toBe(RECORDS_CSV);
  });

  it("resolves chunk text", async () => {
    const { api } = client();
    const text = await api.chunkText("doc-a:0");
    expect(text).toContain("Gigasporaceae");
  });
});
